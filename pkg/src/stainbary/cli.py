"""Command-line front end.

Settings resolve in the order: command-line flag, then the ``--config``
TOML file, then the built-in default. Exit codes: 0 success, 1 internal
error, 2 unreadable input, 3 solver non-convergence, 64 invalid usage.
Failures print a one-line JSON object with an ``error`` category to
stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import __version__
from .barycenter import (
    BarycenterProblem,
    ScheduleMode,
    SupportStrategy,
    WeightSchedule,
    schedule_weights,
    solve_barycenter,
)
from .metrics import ssim
from .ot_core import SolverConfig
from .palette import DEFAULT_K
from .transfer import (
    DEFAULT_T_SAMPLES,
    MAX_REFERENCES,
    NormalizationRequest,
    _palette,
    augment,
    normalize,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_CONVERGENCE = 3
EXIT_USAGE = 64

DEFAULTS = {
    "k": DEFAULT_K,
    "epsilon": SolverConfig.epsilon,
    "tolerance": SolverConfig.tolerance,
    "max_iterations": SolverConfig.max_iterations,
    "t": None,
    "schedule": ScheduleMode.UNIFORM.value,
    "seed": 0,
    "debias": True,
    "weights": None,
}


class CliError(Exception):
    def __init__(self, code: int, category: str, message: str):
        super().__init__(message)
        self.code = code
        self.category = category


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stainbary", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"stainbary {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, refs=True):
        p.add_argument("--in", dest="input", required=True, help="source image")
        if refs:
            p.add_argument("--ref", dest="refs", action="append", required=True,
                           help="reference image; repeat for intermediates, last is the target")
        p.add_argument("--k", type=int, help=f"palette size (default {DEFAULTS['k']})")
        p.add_argument("--epsilon", type=float,
                       help="regularization relative to the largest cost (default 0.01)")
        p.add_argument("--tolerance", type=float, help="marginal tolerance (default 1e-6)")
        p.add_argument("--max-iterations", type=int, help="iteration cap (default 10000)")
        p.add_argument("--schedule", choices=[m.value for m in ScheduleMode],
                       help="weight schedule for three or more measures (default uniform)")
        p.add_argument("--seed", type=int, help="k-means seed (default 0)")
        p.add_argument("--config", type=Path, help="TOML file with default settings")
        p.add_argument("--report", type=Path, help="write a JSON run report here")

    p = sub.add_parser("normalize", help="recolor the source toward the references")
    common(p)
    p.add_argument("--out", type=Path, required=True, help="output PNG")
    p.add_argument("--debias", action=argparse.BooleanOptionalAction, default=None,
                   help="shrinkage-corrected map toward a single reference (default on)")

    p = sub.add_parser("augment", help="write one recolored image per t sample")
    common(p)
    p.add_argument("--out-dir", type=Path, required=True, help="output directory")
    p.add_argument("--t", type=_floats, help="comma-separated t samples (default 0,0.25,0.5,0.75,1)")
    p.add_argument("--debias", action=argparse.BooleanOptionalAction, default=None,
                   help="shrinkage-corrected map toward a single reference (default on)")

    p = sub.add_parser("barycenter", help="write the barycenter palette as CSV")
    common(p)
    p.add_argument("--out", type=Path, required=True, help="output CSV (L,a,b,weight)")
    p.add_argument("--t", type=_floats, help="schedule time, a single value (default 1)")
    p.add_argument("--weights", type=_floats, help="explicit barycenter weights, overrides --t")

    p = sub.add_parser("metrics", help="SSIM over image pairs")
    p.add_argument("--pairs", action="append", required=True,
                   help="two comma-separated image paths; repeatable")
    p.add_argument("--out", type=Path, help="also write the JSON here")

    sub.add_parser("info", help="print version and default settings")
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise CliError(EXIT_INPUT, "input", f"cannot read config {path}: {exc}")
    except tomllib.TOMLDecodeError as exc:
        raise CliError(EXIT_USAGE, "usage", f"invalid TOML in {path}: {exc}")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise CliError(EXIT_USAGE, "usage", f"unknown config keys: {', '.join(unknown)}")
    return data


def _settings(args) -> dict:
    config = _load_config(getattr(args, "config", None))
    out = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else config.get(key, default)
    if isinstance(out["t"], (int, float)):
        out["t"] = [float(out["t"])]
    return out


def read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as exc:
        raise CliError(EXIT_INPUT, "input", f"cannot read image {path}: {exc}")


def _temp_png(image: np.ndarray, final: Path) -> Path:
    fd, tmp = tempfile.mkstemp(prefix=f".{final.name}.", suffix=".tmp", dir=final.parent)
    os.close(fd)
    Image.fromarray(image).save(tmp, format="PNG")
    return Path(tmp)


def _commit(pairs):
    # temp files are renamed only once every output exists
    for tmp, final in pairs:
        os.replace(tmp, final)


def _discard(pairs):
    for tmp, _ in pairs:
        Path(tmp).unlink(missing_ok=True)


def _solver(s) -> SolverConfig:
    return SolverConfig(epsilon=s["epsilon"], tolerance=s["tolerance"],
                        max_iterations=s["max_iterations"])


def _request(args, s, ts):
    if len(args.refs) > MAX_REFERENCES:
        raise CliError(EXIT_USAGE, "usage",
                       f"at most {MAX_REFERENCES} references, got {len(args.refs)}")
    source = read_image(args.input)
    refs = [read_image(r) for r in args.refs]
    return NormalizationRequest(
        source=source, references=refs, schedule=WeightSchedule(mode=s["schedule"]),
        t_samples=ts, k=s["k"], solver=_solver(s), seed=s["seed"], debias=s["debias"],
    )


def _not_converged(results):
    bad = [r.t for r in results if not r.converged]
    if bad:
        raise CliError(EXIT_CONVERGENCE, "convergence",
                       f"solver did not converge for t = {bad}; raise --max-iterations "
                       "or --tolerance")


def _echo(args, s) -> dict:
    cfg = {k: v for k, v in s.items() if v is not None}
    cfg["input"] = str(args.input)
    cfg["references"] = [str(r) for r in args.refs]
    return cfg


def _cmd_normalize(args, s):
    result = normalize(_request(args, s, (1.0,)))
    _not_converged([result])
    args.out.parent.mkdir(parents=True, exist_ok=True)
    pairs = [(_temp_png(result.image, args.out), args.out)]
    _commit(pairs)
    return {
        "config": _echo(args, s),
        "outputs": [str(args.out)],
        "iterations": result.iterations,
        "clip_fraction": result.clip_fraction,
    }


def _cmd_augment(args, s):
    ts = s["t"] if s["t"] is not None else list(DEFAULT_T_SAMPLES)
    results = augment(_request(args, s, ts))
    _not_converged(results)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    width = max(2, len(str(len(results) - 1)))
    stem = Path(args.input).stem
    pairs = []
    try:
        for i, r in enumerate(results):
            final = args.out_dir / f"{stem}_t{i:0{width}d}.png"
            pairs.append((_temp_png(r.image, final), final))
    except BaseException:
        _discard(pairs)
        raise
    _commit(pairs)
    return {
        "config": _echo(args, s),
        "outputs": [str(f) for _, f in pairs],
        "t": [r.t for r in results],
        "iterations": [r.iterations for r in results],
        "clip_fraction": [r.clip_fraction for r in results],
    }


def _cmd_barycenter(args, s):
    if len(args.refs) > MAX_REFERENCES:
        raise CliError(EXIT_USAGE, "usage",
                       f"at most {MAX_REFERENCES} references, got {len(args.refs)}")
    images = [read_image(args.input)] + [read_image(r) for r in args.refs]
    n = len(images)
    if s["weights"] is not None:
        lam = np.asarray(s["weights"], dtype=np.float64)
        if lam.size != n:
            raise CliError(EXIT_USAGE, "usage", f"{n} measures but {lam.size} weights")
    else:
        ts = s["t"] if s["t"] is not None else [1.0]
        if len(ts) != 1:
            raise CliError(EXIT_USAGE, "usage", "barycenter takes a single --t value")
        lam = schedule_weights(WeightSchedule(mode=s["schedule"]), ts[0], n)
    measures = [_palette(im, s["k"], s["seed"]).measure for im in images]
    try:
        problem = BarycenterProblem(measures, lam, support=SupportStrategy.UNION,
                                    solver=_solver(s))
    except ValueError as exc:
        raise CliError(EXIT_USAGE, "usage", str(exc))
    result = solve_barycenter(problem)
    if not result.converged:
        raise CliError(EXIT_CONVERGENCE, "convergence",
                       f"barycenter did not converge in {result.iterations} iterations")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{args.out.name}.", suffix=".tmp", dir=args.out.parent)
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write("L,a,b,weight\n")
        for row, w in zip(result.measure.support.tolist(), result.measure.weights.tolist()):
            fh.write(",".join(repr(v) for v in (*row, w)) + "\n")
    _commit([(tmp, args.out)])
    return {
        "config": _echo(args, s) | {"weights": [float(v) for v in lam]},
        "outputs": [str(args.out)],
        "iterations": result.iterations,
        "support_size": result.measure.size,
    }


def _cmd_metrics(args):
    rows = []
    for pair in args.pairs:
        parts = [p for p in pair.split(",") if p]
        if len(parts) != 2:
            raise CliError(EXIT_USAGE, "usage", f"--pairs needs two paths, got {pair!r}")
        a, b = (read_image(p) for p in parts)
        if a.shape != b.shape:
            raise CliError(EXIT_USAGE, "usage",
                           f"image sizes differ for {pair}: {a.shape[:2]} vs {b.shape[:2]}")
        rows.append({"a": parts[0], "b": parts[1], "ssim": ssim(a, b)})
    values = np.array([r["ssim"] for r in rows])
    report = {
        "pairs": rows,
        "count": len(rows),
        "ssim": float(values.mean()),
        "ssim_std": float(values.std()),
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return None


def _cmd_info():
    info = {
        "version": __version__,
        "defaults": {k: v for k, v in DEFAULTS.items() if v is not None}
        | {"t": list(DEFAULT_T_SAMPLES), "max_references": MAX_REFERENCES},
        "schedules": [m.value for m in ScheduleMode],
    }
    sys.stdout.write(json.dumps(info, indent=2, sort_keys=True) + "\n")


COMMANDS = {"normalize": _cmd_normalize, "augment": _cmd_augment,
            "barycenter": _cmd_barycenter}


def _fail(exc: CliError) -> int:
    sys.stderr.write(json.dumps({"error": exc.category, "message": str(exc)}) + "\n")
    return exc.code


def main(argv=None) -> int:
    started = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        if args.command == "info":
            _cmd_info()
            return EXIT_OK
        if args.command == "metrics":
            _cmd_metrics(args)
            return EXIT_OK
        s = _settings(args)
        try:
            report = COMMANDS[args.command](args, s)
        except ValueError as exc:
            raise CliError(EXIT_USAGE, "usage", str(exc))
        except FloatingPointError as exc:
            raise CliError(EXIT_CONVERGENCE, "convergence", str(exc))
        if args.report is not None:
            report = {"command": args.command, **report,
                      "wall_time_s": time.perf_counter() - started}
            args.report.parent.mkdir(parents=True, exist_ok=True)
            args.report.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
        return EXIT_OK
    except CliError as exc:
        return _fail(exc)
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
