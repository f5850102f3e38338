"""Command-line entry point: ``simplexenc <subcommand> [flags]``.

Flags override values from ``--config FILE`` (flat ``key=value`` lines),
which override built-in defaults. Every run writes ``manifest.txt`` with the
effective settings into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, checkpoint, plotting
from .encoding import BACKENDS, LEVEL_SCALES, EncoderConfig
from .field import TrainConfig, TrainingError
from .tasks import (FIELD_KINDS, ImageDataset, NoiseFieldSpec, bundled_image_path, counter_rng,
                    fit_field, fit_image, save_image)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TRAINING = 3
EXIT_IO = 4
EXIT_CHECKPOINT = 5
EXIT_TASK = 6

UTILIZATION_LEVELS = (2, 4, 8, 16, 32, 64, 128)
# distinct-vertex bitmap cap (bits) for a single utilization estimate
MAX_LATTICE_POINTS = 1 << 31

log = logging.getLogger("simplexenc")


class UsageError(Exception):
    pass


def int_range(text: str) -> list[int]:
    """Parse ``"3"``, ``"2-7"`` or ``"2,4,8"`` into a list of ints."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part[1:]:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list or range: {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key=value file; flags take precedence")
    p.add_argument("--output-dir", type=Path, default=Path("out"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--deterministic", action="store_true",
                   help="fixed-order gradient merge and recorded thread count")


def _encoder_flags(p: argparse.ArgumentParser, dimension: int) -> None:
    p.add_argument("--dimension", type=int, default=dimension)
    p.add_argument("--levels", type=int, default=16)
    p.add_argument("--table-size", type=int, default=19, help="log2 of entries per level")
    p.add_argument("--features", type=int, default=2)
    p.add_argument("--base-resolution", type=int, default=16)
    p.add_argument("--growth", type=float, default=1.5)
    p.add_argument("--backend", choices=BACKENDS, default="simplex")
    p.add_argument("--level-scale", choices=LEVEL_SCALES, default="raw")


def _train_flags(p: argparse.ArgumentParser, steps: int, batch: int) -> None:
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--batch", type=int, default=batch)
    p.add_argument("--lr-tables", type=float, default=1e-2)
    p.add_argument("--lr-mlp", type=float, default=1e-3)
    p.add_argument("--hidden-width", type=int, default=64)
    p.add_argument("--hidden-layers", type=int, default=2)
    p.add_argument("--log-every", type=int, default=100)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="simplexenc",
                                     description="Simplex-lattice hash encodings: fitting, analysis, benchmarks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs = {}

    p = sub.add_parser("fit-image", help="fit an RGB image and write its reconstruction")
    _common(p)
    _encoder_flags(p, 2)
    _train_flags(p, 10_000, 4096)
    p.add_argument("--input", type=Path, help="PNG/JPEG image (default: bundled 512x512 photo)")
    p.add_argument("--eval-every", type=int, default=0, help="full-image PSNR interval (0: steps/10)")
    p.add_argument("--paper-scale", action="store_true", help="L=16, T=2^19 tables")
    subs["fit-image"] = p

    p = sub.add_parser("fit-field", help="regress an n-dimensional noise field")
    _common(p)
    _encoder_flags(p, 3)
    _train_flags(p, 2000, 4096)
    p.add_argument("--kind", choices=FIELD_KINDS, default="perlin")
    p.add_argument("--frequency", type=float, default=4.0)
    p.add_argument("--field-seed", type=int, default=0)
    p.add_argument("--train-samples", type=int, default=1 << 16)
    p.add_argument("--holdout-samples", type=int, default=1 << 14)
    subs["fit-field"] = p

    p = sub.add_parser("bench-kernel", help="time the lookup kernel across dimensions")
    _common(p)
    p.add_argument("--dimension", type=int_range, default=int_range("2-7"))
    p.add_argument("--backend", choices=BACKENDS + ("both",), default="both")
    p.add_argument("--cells", type=int, default=0, help="lattice cells (0: 2^21, or 2^27 with --paper-scale)")
    p.add_argument("--samples", type=int, default=1 << 10)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--features", type=int, default=2)
    p.add_argument("--paper-scale", action="store_true")
    subs["bench-kernel"] = p

    p = sub.add_parser("analyze-memory", help="analytic and sampled lattice utilization")
    _common(p)
    p.add_argument("--dimension", type=int_range, default=int_range("2-7"),
                   help="dimensions for the analytic bound")
    p.add_argument("--sample-dimensions", type=int_range, default=int_range("2-4"),
                   help="dimensions for the sampled estimate")
    p.add_argument("--level-list", type=int_range, default=list(UTILIZATION_LEVELS))
    p.add_argument("--samples", type=int, default=0, help="per estimate (0: sized to the lattice)")
    p.add_argument("--paper-scale", action="store_true", help="use 4x the automatic sample counts")
    subs["analyze-memory"] = p

    p = sub.add_parser("noise-gen", help="render a noise field slice and dump samples")
    _common(p)
    p.add_argument("--dimension", type=int, default=2)
    p.add_argument("--kind", choices=("perlin", "simplex"), default="simplex")
    p.add_argument("--frequency", type=float, default=8.0)
    p.add_argument("--size", type=int, default=256, help="side of the rendered slice in pixels")
    p.add_argument("--count", type=int, default=1024, help="random samples written to CSV")
    subs["noise-gen"] = p

    p = sub.add_parser("inspect", help="describe a checkpoint file")
    _common(p)
    p.add_argument("--input", type=Path, required=True)
    subs["inspect"] = p
    return parser, subs


def read_config_file(path: Path) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, text in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            value = _bool(text)
        else:
            try:
                value = action.type(text) if action.type else text
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
            if action.choices and value not in action.choices:
                raise UsageError(f"config key {key!r} must be one of {list(action.choices)}")
        defaults[key] = value
    sub.set_defaults(**defaults)


def encoder_config(args) -> EncoderConfig:
    levels, log2_size = args.levels, args.table_size
    if getattr(args, "paper_scale", False):
        levels, log2_size = 16, 19
    if not 0 <= log2_size <= 32:
        raise UsageError(f"--table-size is log2 and must be in [0, 32], got {log2_size}")
    try:
        return EncoderConfig(n=args.dimension, levels=levels, table_size=1 << log2_size,
                             features=args.features, base_resolution=args.base_resolution,
                             growth=args.growth, backend=args.backend, level_scale=args.level_scale)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def train_config(args) -> TrainConfig:
    try:
        return TrainConfig(steps=args.steps, batch=args.batch, lr_tables=args.lr_tables,
                           lr_mlp=args.lr_mlp, log_every=args.log_every, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def validate(args) -> None:
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if args.command in ("fit-image", "fit-field"):
        encoder_config(args)
        train_config(args)
        if args.hidden_width < 1 or args.hidden_layers < 1:
            raise UsageError("hidden width and layer count must be >= 1")
    if args.command == "fit-image" and args.dimension != 2:
        raise UsageError("fit-image needs --dimension 2")
    if args.command == "fit-field":
        if args.train_samples < 1 or args.holdout_samples < 1:
            raise UsageError("sample counts must be >= 1")
        if not args.frequency > 0:
            raise UsageError("--frequency must be positive")
    if args.command in ("bench-kernel", "analyze-memory", "noise-gen"):
        dims = args.dimension if isinstance(args.dimension, list) else [args.dimension]
        extra = getattr(args, "sample_dimensions", [])
        if any(not 1 <= d <= 8 for d in dims + extra):
            raise UsageError("dimensions must be in [1, 8]")
    if args.command == "bench-kernel" and (args.samples < 1 or args.reps < 1 or args.cells < 0):
        raise UsageError("--samples and --reps must be >= 1, --cells >= 0")
    if args.command == "analyze-memory":
        if any(level < 1 for level in args.level_list) or args.samples < 0:
            raise UsageError("levels must be >= 1 and --samples >= 0")
    if args.command == "noise-gen" and (args.size < 1 or args.count < 0 or not args.frequency > 0):
        raise UsageError("--size must be >= 1, --count >= 0, --frequency > 0")


def parse_and_validate(argv):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        parser.exit(EXIT_USAGE, f"{parser.prog}: error: a subcommand is required\n")
    try:
        if args.config is not None:
            _apply_config(subs[args.command], read_config_file(args.config))
            args = parser.parse_args(argv)
        validate(args)
    except (UsageError, OSError) as exc:
        subs[args.command].error(str(exc))
    return args


def _scalar(value) -> str:
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return "" if value is None else str(value)


def write_manifest(args, out: Path, extra: dict | None = None) -> Path:
    items = {"version": __version__}
    items.update({k: _scalar(v) for k, v in sorted(vars(args).items())})
    if extra:
        items.update({k: _scalar(v) for k, v in extra.items()})
    path = out / "manifest.txt"
    path.write_text("".join(f"{k}={v}\n" for k, v in items.items()))
    return path


def _write_rows(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def cmd_fit_image(args, out: Path) -> dict:
    enc_cfg = encoder_config(args)
    image = args.input or bundled_image_path()
    dataset = ImageDataset.from_file(image)
    result = fit_image(dataset, enc_cfg, train_config(args), args.hidden_width, args.hidden_layers,
                       eval_every=args.eval_every or None, threads=args.threads)
    save_image(out / "reconstruction.png", result.reconstruct(dataset))
    _write_rows(out / "curve.csv", ["step", "loss", "psnr"],
                [(s, repr(l), repr(p)) for s, l, p in result.curve])
    steps = [s for s, _, _ in result.curve]
    plotting.plot_curve({enc_cfg.backend: (steps, [p for _, _, p in result.curve])}, out / "psnr.png")
    checkpoint.save(out / "checkpoint.sxen", result.encoder, result.mlp)
    print(f"psnr={result.psnr:.4f}")
    return {"input_resolved": image, "psnr": repr(result.psnr)}


def cmd_fit_field(args, out: Path) -> dict:
    enc_cfg = encoder_config(args)
    spec = NoiseFieldSpec(args.dimension, seed=args.field_seed, kind=args.kind, frequency=args.frequency)
    result = fit_field(spec, enc_cfg, train_config(args), args.train_samples, args.holdout_samples,
                       args.hidden_width, args.hidden_layers, threads=args.threads)
    _write_rows(out / "curve.csv", ["step", "loss"], [(s, repr(l)) for s, l in result.curve])
    _write_rows(out / "result.csv", ["n", "backend", "kind", "mse", "variance"],
                [(spec.n, enc_cfg.backend, spec.kind, repr(result.mse), repr(result.variance))])
    plotting.plot_curve({enc_cfg.backend: tuple(zip(*result.curve))}, out / "loss.png", ylabel="MSE")
    checkpoint.save(out / "checkpoint.sxen", result.encoder, result.mlp)
    print(f"mse={result.mse:.6g} variance={result.variance:.6g}")
    return {"mse": repr(result.mse), "variance": repr(result.variance)}


def cmd_bench_kernel(args, out: Path) -> dict:
    cells = args.cells or (analysis.FULL_SCALE_CELLS if args.paper_scale else analysis.DESK_CELLS)
    backends = BACKENDS if args.backend == "both" else (args.backend,)
    reports = []
    for n in args.dimension:
        for backend in backends:
            r = analysis.bench_kernel(n, cells, args.samples, args.reps, backend, args.seed, args.features)
            log.info("n=%d %s %.3fs %d vertices/sample", n, backend, r.seconds, r.vertices_per_sample)
            print(f"n={n} backend={backend} seconds={r.seconds:.4f} vertices_per_sample={r.vertices_per_sample}")
            reports.append(r)
    analysis.emit_report(reports, out / "kernel.csv", "kernel", plot_json=True)
    plotting.plot_kernel(reports, out / "kernel.png")
    return {"cells_resolved": cells}


def cmd_analyze_memory(args, out: Path) -> dict:
    rows = [(n, repr(100 * analysis.volume_ratio(n)), repr(100 * analysis.volume_ratio_via_determinant(n)))
            for n in args.dimension]
    _write_rows(out / "volume.csv", ["n", "bound_pct", "determinant_pct"], rows)
    for n, bound, _ in rows:
        print(f"n={n} bound_pct={float(bound):.4f}")
    plotting.plot_volume_ratio([r[0] for r in rows], [float(r[1]) for r in rows], out / "volume.png")
    reports = []
    for n in args.sample_dimensions:
        for level in args.level_list:
            if (level + 1) ** n > MAX_LATTICE_POINTS:
                log.warning("skipping n=%d level=%d: lattice too large to census", n, level)
                continue
            count = args.samples or analysis.default_sample_count(n, level) * (4 if args.paper_scale else 1)
            r = analysis.utilization_estimate(n, level, count, seed=args.seed)
            print(f"n={n} level={level} samples={count} estimate_pct={r.estimate_pct:.4f}")
            reports.append(r)
    analysis.emit_report(reports, out / "utilization.csv", "utilization", plot_json=True)
    if reports:
        plotting.plot_utilization(reports, out / "utilization.png")
    return {}


def cmd_noise_gen(args, out: Path) -> dict:
    spec = NoiseFieldSpec(args.dimension, seed=args.seed, kind=args.kind, frequency=args.frequency)
    s = args.size
    ys, xs = np.mgrid[0:s, 0:s]
    grid = np.full((s * s, spec.n), 0.5)
    grid[:, 0] = (xs.ravel() + 0.5) / s
    if spec.n > 1:
        grid[:, 1] = (ys.ravel() + 0.5) / s
    values = spec(grid).reshape(s, s)
    bound = np.sqrt(spec.n)
    gray = np.clip(0.5 + 0.5 * values / bound, 0.0, 1.0)
    save_image(out / "slice.png", np.repeat(gray[..., None], 3, axis=2))
    pts = counter_rng(args.seed).random((args.count, spec.n))
    vals = spec(pts) if args.count else np.zeros(0)
    _write_rows(out / "samples.csv", [f"x{i}" for i in range(spec.n)] + ["value"],
                [[repr(float(c)) for c in p] + [repr(float(v))] for p, v in zip(pts, vals)])
    print(f"min={values.min():.6f} max={values.max():.6f}")
    return {}


def cmd_inspect(args, out: Path) -> dict:
    encoder, mlp = checkpoint.load(args.input)
    c = encoder.config
    info = {"n": c.n, "levels": c.levels, "table_size": c.table_size, "features": c.features,
            "base_resolution": c.base_resolution, "growth": c.growth, "backend": c.backend,
            "level_scale": c.level_scale, "table_params": encoder.tables.size,
            "table_abs_max": float(np.abs(encoder.tables).max()) if encoder.tables.size else 0.0,
            "mlp": "none" if mlp is None else "-".join(map(str, mlp.config.widths)),
            "mlp_params": 0 if mlp is None else mlp.parameter_count}
    text = "".join(f"{k}={v}\n" for k, v in info.items())
    sys.stdout.write(text)
    (out / "inspect.txt").write_text(text)
    return {}


COMMANDS = {"fit-image": cmd_fit_image, "fit-field": cmd_fit_field, "bench-kernel": cmd_bench_kernel,
            "analyze-memory": cmd_analyze_memory, "noise-gen": cmd_noise_gen, "inspect": cmd_inspect}


def run(args) -> int:
    out = Path(args.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        extra = COMMANDS[args.command](args, out)
        write_manifest(args, out, extra)
    except TrainingError as exc:
        log.error("training failed: %s", exc)
        return EXIT_TRAINING
    except checkpoint.CheckpointError as exc:
        log.error("bad checkpoint: %s", exc)
        return EXIT_CHECKPOINT
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (ValueError, RuntimeError) as exc:
        log.error("%s failed: %s", args.command, exc)
        return EXIT_TASK
    return EXIT_OK


def main(argv=None) -> int:
    args = parse_and_validate(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
