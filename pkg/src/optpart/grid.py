"""Uniform grids on the box [-pi, pi]^d, scalar fields, and discrete energies.

Nodes along each axis sit at ``x_i = -pi + i*h`` for ``i = 0..n-1`` with
spacing ``h = 2*pi/n``; the ``+pi`` face coincides with ``-pi`` under
periodic boundary conditions and is not stored.  All integrals use the
one-point (Riemann) quadrature ``h^d * sum``, so indicator functions have
exactly representable norms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Literal

import numpy as np
from scipy import fft as sp_fft

BoundaryCondition = Literal["periodic", "dirichlet"]

BOUNDARY_CONDITIONS = ("periodic", "dirichlet")


def _frozen_array(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor-product grid on [-pi, pi]^dim with n nodes per axis."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 4 or self.n % 2 != 0:
            raise ValueError(f"n must be even and >= 4, got {self.n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def num_nodes(self) -> int:
        return self.n**self.dim

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis (identical for all axes)."""
        return -np.pi + self.spacing * np.arange(self.n)

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        """Full coordinate arrays, one per axis, 'ij' indexing."""
        return tuple(np.meshgrid(*[self.axis()] * self.dim, indexing="ij"))


@dataclass(frozen=True)
class Field:
    """A real scalar sampled at every grid node.  Immutable."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {values.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class PartitionState:
    """k scalar fields on a common grid, stacked along the leading axis."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != self.grid.dim + 1 or values.shape[1:] != self.grid.shape:
            raise ValueError(
                f"expected shape (k, {', '.join(map(str, self.grid.shape))}), "
                f"got {values.shape}"
            )
        if values.shape[0] < 1:
            raise ValueError("need at least one part")
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def part(self, i: int) -> Field:
        return Field(self.grid, self.values[i])

    @property
    def parts(self) -> tuple[Field, ...]:
        return tuple(self.part(i) for i in range(self.k))

    @classmethod
    def from_fields(cls, fields: Iterable[Field]) -> "PartitionState":
        fields = tuple(fields)
        if not fields:
            raise ValueError("need at least one field")
        grid = fields[0].grid
        for f in fields[1:]:
            if f.grid != grid:
                raise ValueError("all fields must share one grid")
        return cls(grid, np.stack([f.values for f in fields]))

    def with_values(self, values: np.ndarray) -> "PartitionState":
        return PartitionState(self.grid, values)


@dataclass(frozen=True)
class DomainMask:
    """Node indicator of a computational subdomain: True inside, False outside."""

    grid: GridSpec
    indicator: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.indicator)
        if raw.dtype != bool:
            ok = (raw == 0) | (raw == 1)
            if not ok.all():
                raise ValueError("mask values must be exactly 0 or 1")
        indicator = _frozen_array(raw, dtype=bool)
        if indicator.shape != self.grid.shape:
            raise ValueError(
                f"mask shape {indicator.shape} does not match grid {self.grid.shape}"
            )
        if not indicator.any():
            raise ValueError("mask is empty: no node lies inside the domain")
        object.__setattr__(self, "indicator", indicator)

    @property
    def node_count(self) -> int:
        return int(self.indicator.sum())

    @classmethod
    def full(cls, grid: GridSpec) -> "DomainMask":
        return cls(grid, np.ones(grid.shape, dtype=bool))


# ---------------------------------------------------------------------------
# norms


def _trailing_axes(values: np.ndarray, grid: GridSpec) -> tuple[int, ...]:
    return tuple(range(values.ndim - grid.dim, values.ndim))


def weighted_norms(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Discrete L2 norms over the trailing grid axes (leading axes kept)."""
    axes = _trailing_axes(values, grid)
    return np.sqrt(grid.cell_volume * np.sum(values * values, axis=axes))


def discrete_l2_norm(f: Field) -> float:
    """sqrt(h^d * sum f^2): the quadrature L2 norm of a field."""
    return float(weighted_norms(f.values, f.grid))


def partition_norms(state: PartitionState) -> np.ndarray:
    """Per-part discrete L2 norms, shape (k,)."""
    return weighted_norms(state.values, state.grid)


def max_support_overlap(state: PartitionState) -> float:
    """Largest second-place |value| over all nodes: 0.0 iff supports are disjoint."""
    if state.k < 2:
        return 0.0
    a = np.abs(state.values)
    second = np.partition(a, state.k - 2, axis=0)[state.k - 2]
    return float(second.max())


def label_map(state: PartitionState) -> np.ndarray:
    """Lowest-index argmax over parts at each node."""
    return np.argmax(state.values, axis=0)


# ---------------------------------------------------------------------------
# energies


@lru_cache(maxsize=16)
def _periodic_mode_squares(dim: int, n: int) -> np.ndarray:
    # integer wavenumbers m in [-n/2, n/2), |m|^2 per mode in fftn layout
    m = np.fft.fftfreq(n, d=1.0 / n)
    grids = np.meshgrid(*[m] * dim, indexing="ij")
    out = sum(g * g for g in grids)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=16)
def _sine_eigenvalues(dim: int, n: int) -> np.ndarray:
    # modes sin(j*(x+pi)/2), j = 1..n-1, per axis; Laplacian eigenvalue (j/2)^2
    j = np.arange(1, n)
    lam1 = (j / 2.0) ** 2
    grids = np.meshgrid(*[lam1] * dim, indexing="ij")
    out = sum(grids)
    out.setflags(write=False)
    return out


def _energy_periodic(values: np.ndarray, grid: GridSpec) -> float:
    axes = _trailing_axes(values, grid)
    coef = np.fft.fftn(values, axes=axes) / grid.num_nodes
    k2 = _periodic_mode_squares(grid.dim, grid.n)
    vol = (2.0 * np.pi) ** grid.dim
    return float(0.5 * vol * np.sum(k2 * (coef.real**2 + coef.imag**2)))


def _energy_sine(values: np.ndarray, grid: GridSpec) -> float:
    # expand interior nodes (index 1..n-1 per axis) in the sine basis; the
    # index-0 boundary planes are treated as zero
    axes = _trailing_axes(values, grid)
    sl = [slice(None)] * values.ndim
    for ax in axes:
        sl[ax] = slice(1, None)
    interior = values[tuple(sl)]
    coef = sp_fft.dstn(interior, type=1, axes=axes) / grid.n**grid.dim
    lam = _sine_eigenvalues(grid.dim, grid.n)
    return float(0.5 * np.pi**grid.dim * np.sum(lam * coef * coef))


def _energy_masked(values: np.ndarray, grid: GridSpec) -> float:
    # first-order forward differences with zero extension past the box edge
    axes = _trailing_axes(values, grid)
    total = 0.0
    for ax in axes:
        d = np.diff(values, axis=ax, append=0.0)
        total += float(np.sum(d * d))
    h = grid.spacing
    return 0.5 * h ** (grid.dim - 2) * total


def dirichlet_energy(
    state: PartitionState,
    bc: BoundaryCondition = "periodic",
    mask: DomainMask | None = None,
) -> float:
    """Total gradient energy 0.5 * sum_i ||grad u_i||^2 of a partition.

    Without a mask the gradient is spectral (trigonometric for periodic,
    sine-series for dirichlet).  With a mask, forward differences are used so
    that the jump across the domain boundary is charged to the energy.
    """
    if bc not in BOUNDARY_CONDITIONS:
        raise ValueError(f"unknown boundary condition {bc!r}")
    if mask is not None:
        if mask.grid != state.grid:
            raise ValueError("mask grid does not match state grid")
        return _energy_masked(state.values, state.grid)
    if bc == "periodic":
        return _energy_periodic(state.values, state.grid)
    return _energy_sine(state.values, state.grid)
