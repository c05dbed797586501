"""Initial partitions from random Voronoi diagrams, and named domain masks.

Seeds are snapped to grid nodes so every cell is nonempty by construction
(each seed node is strictly closest to itself).  Under periodic boundary
conditions distances are geodesic on the torus; otherwise they are plain
Euclidean.  For dirichlet runs the stored boundary planes carry no cell, so
the initial fields already satisfy the zero-boundary requirement of the
dirichlet semigroup.
"""

from __future__ import annotations

import numpy as np

from .grid import DomainMask, GridSpec, PartitionState

MAX_SEED_ATTEMPTS = 100

BOX_PERIOD = 2.0 * np.pi


class InitFailed(RuntimeError):
    """Could not produce k nonempty Voronoi cells inside the domain."""


def _domain_indicator(
    grid: GridSpec, bc: str, mask: DomainMask | None
) -> np.ndarray:
    inside = np.ones(grid.shape, dtype=bool)
    if bc == "dirichlet":
        for ax in range(grid.dim):
            sl = [slice(None)] * grid.dim
            sl[ax] = 0
            inside[tuple(sl)] = False
    if mask is not None:
        if mask.grid != grid:
            raise ValueError("mask grid does not match grid")
        inside &= mask.indicator
    return inside


def _node_coordinates(grid: GridSpec) -> np.ndarray:
    mesh = grid.meshgrid()
    return np.stack([m.ravel() for m in mesh], axis=1)  # (num_nodes, dim)


def voronoi_labels(
    grid: GridSpec,
    seeds: np.ndarray,
    bc: str = "periodic",
    mask: DomainMask | None = None,
) -> np.ndarray:
    """Nearest-seed label per node (-1 outside the domain).

    Ties go to the lowest seed index.  Periodic runs measure distance on the
    torus of period 2*pi per axis.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.shape[1] != grid.dim:
        raise ValueError(f"seeds must have shape (k, {grid.dim})")
    coords = _node_coordinates(grid)  # (N, dim)
    delta = np.abs(coords[None, :, :] - seeds[:, None, :])  # (k, N, dim)
    if bc == "periodic":
        delta = np.minimum(delta, BOX_PERIOD - delta)
    dist2 = np.sum(delta * delta, axis=2)
    labels = np.argmin(dist2, axis=0).reshape(grid.shape)
    inside = _domain_indicator(grid, bc, mask)
    labels[~inside] = -1
    return labels


def voronoi_init(
    grid: GridSpec,
    k: int,
    rng_seed: int,
    bc: str = "periodic",
    mask: DomainMask | None = None,
) -> PartitionState:
    """Random k-cell Voronoi partition as normalized indicator fields.

    Part i is the indicator of cell i scaled to unit discrete L2 norm, so
    the output is nonnegative with pairwise disjoint supports and exact unit
    norms.  Redraws on an empty cell, up to MAX_SEED_ATTEMPTS.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    inside = _domain_indicator(grid, bc, mask)
    candidates = np.nonzero(inside.ravel())[0]
    coords = _node_coordinates(grid)
    rng = np.random.default_rng(rng_seed)

    for _ in range(MAX_SEED_ATTEMPTS):
        if candidates.size < k:
            break
        pick = rng.choice(candidates.size, size=k, replace=False)
        seeds = coords[candidates[pick]]
        labels = voronoi_labels(grid, seeds, bc, mask)
        counts = np.bincount(labels.ravel()[labels.ravel() >= 0], minlength=k)
        if (counts > 0).all():
            values = np.zeros((k,) + grid.shape)
            scale = 1.0 / np.sqrt(grid.cell_volume * counts)
            for i in range(k):
                values[i][labels == i] = scale[i]
            return PartitionState(grid, values)
    raise InitFailed(
        f"could not draw {k} nonempty Voronoi cells from {candidates.size} "
        f"domain nodes in {MAX_SEED_ATTEMPTS} attempts"
    )


# ---------------------------------------------------------------------------
# named mask shapes


def _require_2d(grid: GridSpec, name: str):
    if grid.dim != 2:
        raise ValueError(f"mask shape {name!r} is only defined in 2D")


def _polygon(grid: GridSpec, sides: int, radius: float) -> np.ndarray:
    x, y = grid.meshgrid()
    # inside iff behind every edge: projection on each outward edge normal
    # stays below the apothem
    apothem = radius * np.cos(np.pi / sides)
    inside = np.ones(grid.shape, dtype=bool)
    for v in range(sides):
        ang = np.pi / 2.0 + np.pi / sides + 2.0 * np.pi * v / sides
        inside &= x * np.cos(ang) + y * np.sin(ang) <= apothem
    return inside


def make_mask(grid: GridSpec, shape: str, **params: float) -> DomainMask:
    """Build a named domain mask.

    Shapes: full, disk(radius), ellipse(a, b), triangle/pentagon/octagon
    (radius = circumradius), star3/star5(inner, amplitude), sector(radius,
    angle0, angle1), square_with_holes(half, hole_radius, hole_offset).
    All shapes are centered at the origin and sized to stay inside the box.
    """
    known = {
        "full",
        "disk",
        "ellipse",
        "triangle",
        "pentagon",
        "octagon",
        "star3",
        "star5",
        "sector",
        "square_with_holes",
    }
    if shape not in known:
        raise ValueError(f"unknown mask shape {shape!r}; expected one of {sorted(known)}")

    if shape == "full":
        return DomainMask.full(grid)

    if shape == "disk":
        r = float(params.pop("radius", 2.5))
        mesh = grid.meshgrid()
        rho2 = sum(m * m for m in mesh)
        inside = rho2 <= r * r
    elif shape == "ellipse":
        _require_2d(grid, shape)
        a = float(params.pop("a", 2.8))
        b = float(params.pop("b", 1.7))
        x, y = grid.meshgrid()
        inside = (x / a) ** 2 + (y / b) ** 2 <= 1.0
    elif shape in ("triangle", "pentagon", "octagon"):
        _require_2d(grid, shape)
        sides = {"triangle": 3, "pentagon": 5, "octagon": 8}[shape]
        inside = _polygon(grid, sides, float(params.pop("radius", 2.8)))
    elif shape in ("star3", "star5"):
        _require_2d(grid, shape)
        folds = 3 if shape == "star3" else 5
        inner = float(params.pop("inner", 1.8))
        amp = float(params.pop("amplitude", 0.95))
        x, y = grid.meshgrid()
        theta = np.arctan2(y, x)
        inside = np.hypot(x, y) <= inner + amp * np.cos(folds * theta)
    elif shape == "sector":
        _require_2d(grid, shape)
        r = float(params.pop("radius", 2.8))
        a0 = float(params.pop("angle0", -0.75 * np.pi))
        a1 = float(params.pop("angle1", 0.75 * np.pi))
        x, y = grid.meshgrid()
        theta = np.arctan2(y, x)
        inside = (np.hypot(x, y) <= r) & (theta >= a0) & (theta <= a1)
    else:  # square_with_holes
        _require_2d(grid, shape)
        half = float(params.pop("half", 2.6))
        hole_r = float(params.pop("hole_radius", 0.65))
        off = float(params.pop("hole_offset", 1.2))
        x, y = grid.meshgrid()
        inside = (np.abs(x) <= half) & (np.abs(y) <= half)
        inside &= np.hypot(x - off, y) > hole_r
        inside &= np.hypot(x + off, y) > hole_r

    if params:
        raise ValueError(
            f"unknown parameters for shape {shape!r}: {sorted(params)}"
        )
    if not inside.any():
        raise ValueError(f"mask shape {shape!r} contains no grid node")
    return DomainMask(grid, inside)
