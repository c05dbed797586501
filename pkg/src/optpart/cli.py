"""Command-line front end: configuration, run driver, and file outputs.

Outputs are plain formats chosen for diffability: a CSV energy trace with
full-precision floats, binary P5 PGM label images in 2D, legacy ASCII VTK
structured points in 3D, and raw float64 field dumps with a small text
sidecar.  Runs are deterministic for a fixed configuration, so repeated
invocations produce byte-identical files.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import DomainMask, GridSpec, PartitionState, label_map
from .initial import InitFailed, make_mask, voronoi_init
from .projection import DegeneratePart
from .scheme import EnergyTrace, SchemeConfig, SecantConfig, TraceRow, run

ALGORITHM_NAMES = {
    "four-step": "four_step",
    "three-step-1": "three_step_linear",
    "three-step-2": "three_step_geometric",
    "three-step-1-ed": "three_step_linear_ed",
    "three-step-2-ed": "three_step_geometric_ed",
}


class CliError(ValueError):
    """Configuration problem that should abort with a one-line message."""


@dataclass
class RunSetup:
    grid: GridSpec
    cfg: SchemeConfig
    seed: int
    out_dir: Path
    snapshot_every: int
    dump_fields: bool


def _parse_number(text: str) -> float:
    """Parse a decimal or a fraction like 1/128."""
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _read_config_file(path: Path) -> dict[str, str]:
    """Flat key = value lines; blank lines and # comments are skipped."""
    if not path.is_file():
        raise CliError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="optpart",
        description="Compute an optimal k-partition by constrained diffusion.",
    )
    p.add_argument("--config", type=Path, help="flat key=value file; flags override it")
    p.add_argument("--k", type=int, help="number of parts (required)")
    p.add_argument("--tau", type=str, help="time step (default 0.1; fractions allowed)")
    p.add_argument(
        "--tau-schedule",
        type=str,
        help="comma list of time steps: warm-up values, then the steady value",
    )
    p.add_argument("--grid", type=int, help="nodes per axis (default 256)")
    p.add_argument("--dim", type=int, choices=(2, 3), help="space dimension (default 2)")
    p.add_argument(
        "--algorithm",
        choices=sorted(ALGORITHM_NAMES),
        help="splitting scheme (default four-step)",
    )
    p.add_argument(
        "--bc", choices=("periodic", "dirichlet"), help="boundary condition (default periodic)"
    )
    p.add_argument(
        "--mask",
        type=str,
        help="domain mask: a P5 PGM file, or shape:NAME[:key=value...] "
        "(requires --bc dirichlet)",
    )
    p.add_argument("--seed", type=int, help="RNG seed for the initial partition (default 0)")
    p.add_argument("--max-iters", type=int, help="iteration cap (default 2000)")
    p.add_argument("--out-dir", type=Path, help="output directory (default .)")
    p.add_argument(
        "--snapshot-every",
        type=int,
        help="write a label snapshot every N iterations (default: off)",
    )
    p.add_argument(
        "--dump-fields",
        action="store_true",
        default=None,
        help="also write the final part values as raw float64",
    )
    return p


def _parse_mask(spec: str, grid: GridSpec) -> DomainMask:
    if spec.startswith("shape:"):
        pieces = spec.split(":")[1:]
        if not pieces or not pieces[0]:
            raise CliError("empty mask shape name; use shape:NAME[:key=value...]")
        name, params = pieces[0], {}
        for piece in pieces[1:]:
            if "=" not in piece:
                raise CliError(f"bad mask parameter {piece!r}; use key=value")
            key, value = piece.split("=", 1)
            params[key.strip()] = _parse_number(value)
        try:
            return make_mask(grid, name, **params)
        except ValueError as err:
            raise CliError(str(err)) from err
    path = Path(spec)
    if not path.is_file():
        raise CliError(f"mask file not found: {path}")
    try:
        image = read_pgm(path)
    except ValueError as err:
        raise CliError(f"{path}: {err}") from err
    if grid.dim != 2:
        raise CliError("PGM masks are only supported for --dim 2")
    if image.shape != grid.shape:
        raise CliError(
            f"mask size {image.shape[1]}x{image.shape[0]} does not match "
            f"grid {grid.n}x{grid.n}"
        )
    return DomainMask(grid, (image.T != 0).astype(bool))


def parse_config(argv: list[str] | None = None) -> RunSetup:
    """Merge config file and flags into a validated run setup."""
    args = _build_parser().parse_args(argv)
    raw = _read_config_file(args.config) if args.config else {}

    def pick(name: str, flag_value, convert):
        if flag_value is not None:
            return flag_value
        if name in raw:
            try:
                return convert(raw[name])
            except ValueError as err:
                raise CliError(f"config key {name}: {err}") from err
        return None

    as_bool = lambda s: s.lower() in ("1", "true", "yes", "on")
    k = pick("k", args.k, int)
    dim = pick("dim", args.dim, int) or 2
    n = pick("grid", args.grid, int) or 256
    tau_single = pick("tau", args.tau, str)
    tau_schedule = pick("tau_schedule", args.tau_schedule, str)
    algorithm = pick("algorithm", args.algorithm, str) or "four-step"
    bc = pick("bc", args.bc, str) or "periodic"
    mask_spec = pick("mask", args.mask, str)
    seed = pick("seed", args.seed, int)
    seed = 0 if seed is None else seed
    n_max = pick("max_iters", args.max_iters, int) or 2000
    out_dir = pick("out_dir", args.out_dir, Path) or Path(".")
    snapshot_every = pick("snapshot_every", args.snapshot_every, int) or 0
    dump = pick("dump_fields", args.dump_fields, as_bool)
    dump = bool(dump) if dump is not None else False

    if k is None:
        raise CliError("--k is required (or set k in the config file)")
    if dim not in (2, 3):
        raise CliError(f"--dim must be 2 or 3, got {dim}")
    if algorithm not in ALGORITHM_NAMES:
        raise CliError(
            f"unknown algorithm {algorithm!r}; choose from {sorted(ALGORITHM_NAMES)}"
        )
    if bc not in ("periodic", "dirichlet"):
        raise CliError(f"unknown bc {bc!r}; choose periodic or dirichlet")

    try:
        grid = GridSpec(dim=dim, n=n)
    except ValueError as err:
        raise CliError(str(err)) from err

    mask = None
    if mask_spec:
        if bc != "dirichlet":
            raise CliError("--mask requires --bc dirichlet (masked domains are not periodic)")
        mask = _parse_mask(mask_spec, grid)

    if tau_schedule:
        try:
            tau: float | tuple[float, ...] = tuple(
                _parse_number(t) for t in tau_schedule.split(",") if t.strip()
            )
        except ValueError as err:
            raise CliError(f"bad --tau-schedule: {err}") from err
        if not tau:
            raise CliError("--tau-schedule is empty")
    elif tau_single:
        try:
            tau = _parse_number(tau_single)
        except ValueError as err:
            raise CliError(f"bad --tau: {err}") from err
    else:
        tau = 0.1

    try:
        cfg = SchemeConfig(
            k=k,
            variant=ALGORITHM_NAMES[algorithm],
            tau=tau,
            bc=bc,
            mask=mask,
            n_max=n_max,
            secant=SecantConfig(),
        )
    except ValueError as err:
        raise CliError(str(err)) from err

    return RunSetup(
        grid=grid,
        cfg=cfg,
        seed=seed,
        out_dir=out_dir,
        snapshot_every=snapshot_every,
        dump_fields=dump,
    )


# ---------------------------------------------------------------------------
# writers


def _format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_energy_csv(trace: EnergyTrace, path: Path | str):
    """CSV trace: iter,energy,min_value,max_norm_dev,sigma,secant_iters,stopped."""
    lines = ["iter,energy,min_value,max_norm_dev,sigma,secant_iters,stopped"]
    for row in trace:
        sigma = "" if row.sigma is None else _format_float(row.sigma)
        lines.append(
            ",".join(
                (
                    str(row.iteration),
                    _format_float(row.energy),
                    _format_float(row.min_value),
                    _format_float(row.max_norm_dev),
                    sigma,
                    str(row.secant_iters),
                    "1" if row.stopped else "0",
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def _spread_labels(labels: np.ndarray, k: int) -> np.ndarray:
    if k > 1:
        spread = np.round(labels * (255.0 / (k - 1)))
    else:
        spread = np.zeros_like(labels, dtype=float)
    return spread.astype(np.uint8)


def write_pgm(image: np.ndarray, path: Path | str):
    """Binary P5 PGM, maxval 255; rows are the second array axis."""
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2D")
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())


def read_pgm(path: Path | str) -> np.ndarray:
    """Read a binary P5 PGM with maxval <= 255 into a (rows, cols) array."""
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if len(fields) < 4 or fields[0] != b"P5":
        raise ValueError("not a binary (P5) PGM file")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval > 255:
        raise ValueError(f"PGM maxval {maxval} exceeds 255")
    pos += 1  # single whitespace after maxval
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return raster.reshape(height, width)


def write_vtk_labels(labels: np.ndarray, grid: GridSpec, path: Path | str):
    """Legacy ASCII VTK structured points with one integer label per node."""
    if labels.ndim != 3:
        raise ValueError("VTK label export expects a 3D label array")
    h = grid.spacing
    lines = [
        "# vtk DataFile Version 3.0",
        "partition labels",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {grid.n} {grid.n} {grid.n}",
        f"ORIGIN {-np.pi:.17g} {-np.pi:.17g} {-np.pi:.17g}",
        f"SPACING {h:.17g} {h:.17g} {h:.17g}",
        f"POINT_DATA {grid.num_nodes}",
        "SCALARS label int 1",
        "LOOKUP_TABLE default",
    ]
    # VTK orders points with the first axis varying fastest
    flat = labels.ravel(order="F")
    lines.extend(" ".join(str(int(v)) for v in flat[i : i + 9]) for i in range(0, flat.size, 9))
    Path(path).write_text("\n".join(lines) + "\n")


def export_labels(state: PartitionState, path: Path | str):
    """Write the label map: P5 PGM in 2D, legacy VTK in 3D."""
    labels = label_map(state)
    if state.grid.dim == 2:
        write_pgm(_spread_labels(labels.T, state.k), path)
    elif state.grid.dim == 3:
        write_vtk_labels(labels, state.grid, path)
    else:
        raise ValueError("label export supports 2D and 3D states only")


def export_tiling(state: PartitionState, reps: int, path: Path | str):
    """Tile the label map reps times per axis (periodic partitions only)."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    labels = label_map(state)
    tiled = np.tile(labels, (reps,) * labels.ndim)
    if state.grid.dim == 2:
        write_pgm(_spread_labels(tiled.T, state.k), path)
    elif state.grid.dim == 3:
        write_vtk_labels(tiled, GridSpec(3, state.grid.n * reps), path)
    else:
        raise ValueError("tiling export supports 2D and 3D states only")


def dump_fields(state: PartitionState, out_dir: Path):
    """Raw little-endian float64 part values plus a text sidecar."""
    values = np.ascontiguousarray(state.values, dtype="<f8")
    (out_dir / "fields.bin").write_bytes(values.tobytes())
    sidecar = "\n".join(
        (
            f"k = {state.k}",
            f"dim = {state.grid.dim}",
            f"n = {state.grid.n}",
            "dtype = float64 little-endian",
            "order = part-major, C-contiguous over grid axes",
        )
    )
    (out_dir / "fields.txt").write_text(sidecar + "\n")


# ---------------------------------------------------------------------------
# entry point


def _snapshot_name(out_dir: Path, iteration: int, dim: int) -> Path:
    ext = "pgm" if dim == 2 else "vtk"
    return out_dir / f"labels_{iteration:05d}.{ext}"


def main(argv: list[str] | None = None) -> int:
    try:
        setup = parse_config(argv)
    except CliError as err:
        print(f"optpart: error: {err}", file=sys.stderr)
        return 2

    setup.out_dir.mkdir(parents=True, exist_ok=True)
    cfg = setup.cfg

    try:
        init = voronoi_init(setup.grid, cfg.k, setup.seed, cfg.bc, cfg.mask)
    except (InitFailed, ValueError) as err:
        print(f"optpart: error: {err}", file=sys.stderr)
        return 1

    def snapshot(state: PartitionState, row: TraceRow):
        if setup.snapshot_every > 0 and row.iteration % setup.snapshot_every == 0:
            export_labels(state, _snapshot_name(setup.out_dir, row.iteration, setup.grid.dim))

    try:
        final, trace = run(cfg, init, on_iteration=snapshot)
    except DegeneratePart as err:
        print(f"optpart: error: iteration {getattr(err, 'iteration', '?')}: {err}", file=sys.stderr)
        return 1

    write_energy_csv(trace, setup.out_dir / "trace.csv")
    export_labels(final, setup.out_dir / ("labels.pgm" if setup.grid.dim == 2 else "labels.vtk"))
    if setup.dump_fields:
        dump_fields(final, setup.out_dir)

    last = trace[-1]
    why = "stopped" if last.stopped else "iteration cap reached"
    print(
        f"{why} at iteration {last.iteration}: energy {last.energy:.12g} "
        f"(trace: {setup.out_dir / 'trace.csv'})"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
