"""Command-line entry point: ``robinheat {eigen,kernel,compare,suite}``.

Exit codes: 0 when every verdict passes (or is not applicable by design),
1 when an inequality verdict fails, 2 for invalid configuration or an
unmet hypothesis.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import compare as C
from . import suite as S
from .geometry import Family, GeometryError, RadialGeometry, WarpingFunction
from .heat import SCHEMA, TimeGrid, TruncationError, kernel_spectral, kernel_timestep
from .sturm import DEFAULT_N, MIN_N, PreconditionError, solve

OUT_ENV = "ROBINHEAT_OUT"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
DEFAULT_TIMES = (0.05, 0.1, 0.2, 0.5, 1.0)


class ConfigError(ValueError):
    """Invalid run configuration; ``line`` points into the config file when known."""

    def __init__(self, msg: str, source: Optional[str] = None, line: Optional[int] = None):
        where = f"{source}:{line}: " if source and line else (f"{source}: " if source else "")
        super().__init__(where + msg)


@dataclass
class RunConfig:
    command: str
    family: str = "real"
    dim: int = 3
    kappa: float = 0.0
    radius: float = 1.0
    alpha: float = 1.0
    damping: float = 0.0
    lhs_kappa: Optional[float] = None
    hypothesis: Optional[str] = None
    direction: Optional[str] = None
    grid: int = DEFAULT_N
    modes: Optional[int] = None
    times: Optional[list] = None
    mollifier: Optional[float] = None
    method: str = "spectral"
    preset: Optional[str] = None
    draws: int = 100
    only: Optional[list] = None
    jobs: int = 1
    seed: int = S.DEFAULT_SEED
    out: Optional[str] = None
    format: str = "json"
    allow_negative_alpha: bool = False

    def to_dict(self) -> dict:
        return C.jsonable(dataclasses.asdict(self))


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


# ---------------------------------------------------------------------------
# parsing


def parse_alpha(text) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    t = str(text).strip().lower()
    if t in ("inf", "+inf", "infinity", "dirichlet"):
        return math.inf
    try:
        return float(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"alpha must be a number or 'inf', got {text!r}") from None


def parse_float_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def parse_int_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _geometry_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("geometry")
    g.add_argument("--family", choices=[f.value for f in Family if f != Family.WARPED])
    g.add_argument("--dim", type=int, help="real dimension (complex/quaternionic for kahler/quaternion)")
    g.add_argument("--kappa", type=float, help="model curvature")
    g.add_argument("--radius", type=float)
    g.add_argument("--alpha", type=parse_alpha, help="Robin parameter; 'inf' for Dirichlet")
    n = p.add_argument_group("numerics")
    n.add_argument("--grid", type=int, help=f"grid nodes N (default {DEFAULT_N})")
    n.add_argument("--modes", type=int, help="retained eigenmodes k")


def _output_args(p: argparse.ArgumentParser):
    o = p.add_argument_group("output")
    o.add_argument("--out", help=f"output file (default: ${OUT_ENV}/<name>, else stdout)")
    o.add_argument("--format", choices=["json", "csv"])
    o.add_argument("--config", help="JSON file with option values; command-line flags take precedence")
    o.add_argument("--seed", type=int, help="seed for randomized gamma sweeps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robinheat",
        description="Robin eigenvalues, centre heat kernels and comparison verdicts for radial balls.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigen", help="first Robin eigenvalues of a model ball")
    _geometry_args(p)
    _output_args(p)
    p.add_argument("--allow-negative-alpha", action="store_true", default=None, help="accept alpha < 0 with a warning")

    p = sub.add_parser("kernel", help="centre-based heat kernel on a time list")
    _geometry_args(p)
    _output_args(p)
    p.add_argument("--times", type=parse_float_list, help="comma-separated times")
    p.add_argument("--method", choices=["spectral", "timestep"])
    p.add_argument("--mollifier", type=float, help="initial mollifier width for --method timestep")
    p.add_argument("--allow-negative-alpha", action="store_true", default=None, help="accept alpha < 0 with a warning")

    p = sub.add_parser("compare", help="comparison verdicts for a preset or a custom scenario")
    _geometry_args(p)
    _output_args(p)
    p.add_argument("--preset", choices=sorted(S.PRESETS))
    p.add_argument("--lhs-kappa", type=float, help="curvature of the warped lhs ball f = sn_kappa")
    p.add_argument("--damping", type=float, help="drift perturbation of the Kahler/quaternion lhs")
    p.add_argument("--hypothesis", choices=[h.value for h in C.ScenarioHypothesis if h != C.ScenarioHypothesis.TRANSPLANT])
    p.add_argument("--direction", choices=[d.value for d in C.Direction])
    p.add_argument("--times", type=parse_float_list)
    p.add_argument("--draws", type=int, help="gamma draws for transplant-gamma-sweep")

    p = sub.add_parser("suite", help="run the acceptance battery")
    p.add_argument("--grid", type=int)
    p.add_argument("--only", type=parse_int_list, help="comma-separated criterion numbers")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    _output_args(p)
    return parser


def _line_of(text: str, key: str) -> Optional[int]:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


_CONVERTERS = {
    "alpha": parse_alpha,
    "times": parse_float_list,
    "only": parse_int_list,
}


def load_config_file(path: str) -> dict:
    """Read a JSON config; parse errors and unknown keys are reported with their line."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"column {exc.colno}: {exc.msg}", path, exc.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", path, 1)
    out = {}
    for key, value in raw.items():
        name = key.replace("-", "_")
        if name not in _FIELDS or name in ("command", "out"):
            raise ConfigError(f"unknown or disallowed key {key!r}", path, _line_of(text, key))
        try:
            conv = _CONVERTERS.get(name)
            if conv is not None:
                value = conv(value)
            elif name in ("dim", "grid", "modes", "draws", "jobs", "seed") and value is not None:
                if isinstance(value, bool) or int(value) != value:
                    raise ValueError(f"{key} must be an integer")
                value = int(value)
            elif name in ("kappa", "radius", "damping", "lhs_kappa", "mollifier") and value is not None:
                value = float(value)
        except (ValueError, TypeError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", path, _line_of(text, key)) from None
        out[name] = value
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    values["command"] = args.command
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    """Check numeric parameters against the solver preconditions before any work."""
    if cfg.grid < MIN_N:
        raise ConfigError(f"grid must have at least {MIN_N} nodes")
    if cfg.modes is not None and not 1 <= cfg.modes <= cfg.grid - 2:
        raise ConfigError("modes must lie in [1, grid-2]")
    if cfg.jobs < 1 or cfg.draws < 1:
        raise ConfigError("jobs and draws must be positive")
    if cfg.format not in ("json", "csv"):
        raise ConfigError("format must be json or csv")
    if cfg.command == "suite":
        if cfg.only and any(not 1 <= n <= len(S.CRITERIA) for n in cfg.only):
            raise ConfigError(f"criterion numbers run from 1 to {len(S.CRITERIA)}")
        return
    if math.isnan(cfg.alpha):
        raise ConfigError("alpha must be a number")
    if cfg.alpha < 0:
        if cfg.command == "compare" or not cfg.allow_negative_alpha:
            raise ConfigError(
                "alpha < 0 lies outside the supported comparison regime"
                + ("" if cfg.command == "compare" else " (pass --allow-negative-alpha to solve anyway)")
            )
        print(f"warning: alpha={cfg.alpha} < 0, the first eigenvalue is negative", file=sys.stderr)
    if cfg.times is not None:
        try:
            TimeGrid.of(cfg.times)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if cfg.mollifier is not None and cfg.mollifier <= 0:
        raise ConfigError("mollifier width must be positive")
    if cfg.command == "compare" and cfg.preset is None:
        if cfg.lhs_kappa is None and cfg.damping == 0.0:
            raise ConfigError("custom comparisons need --lhs-kappa (real) or --damping (kahler/quaternion)")
        if cfg.hypothesis is None or cfg.direction is None:
            raise ConfigError("custom comparisons need --hypothesis and --direction")
    if cfg.command != "compare" or cfg.preset is None:
        try:
            model_geometry(cfg)
        except GeometryError as exc:
            raise ConfigError(str(exc)) from None


def model_geometry(cfg: RunConfig) -> RadialGeometry:
    return RadialGeometry(Family(cfg.family), cfg.dim, cfg.kappa, cfg.radius, cfg.alpha)


# ---------------------------------------------------------------------------
# commands


def _envelope(cfg: RunConfig, results) -> dict:
    return {"schema": SCHEMA, "command": cfg.command, "config": cfg.to_dict(), "results": results}


def run_eigen(cfg: RunConfig):
    geom = model_geometry(cfg)
    spec = solve(geom, cfg.grid, cfg.modes or 10)
    res = {
        "geometry": geom.to_dict(),
        "lambda1": spec.lambda1,
        "lambdas": spec.lambdas.tolist(),
        "max_rayleigh_residual": float(spec.rayleigh_residuals().max()),
        "grid": {"N": cfg.grid, "modes": spec.k},
    }
    csv_text = "index,lambda\n" + "".join(f"{i + 1},{lam!r}\n" for i, lam in enumerate(spec.lambdas.tolist()))
    return _envelope(cfg, res), csv_text, EXIT_OK


def run_kernel(cfg: RunConfig):
    geom = model_geometry(cfg)
    tg = TimeGrid.of(cfg.times or DEFAULT_TIMES)
    if cfg.method == "timestep":
        fld = kernel_timestep(geom, tg, mollifier_width=cfg.mollifier, N=cfg.grid)
    else:
        fld = kernel_spectral(solve(geom, cfg.grid, cfg.modes), tg)
    res = fld.to_json()
    res["mass"] = fld.mass().tolist()
    return _envelope(cfg, C.jsonable(res)), fld.to_csv(), EXIT_OK


def _custom_scenario(cfg: RunConfig) -> C.ComparisonScenario:
    fam = Family(cfg.family)
    rhs = RadialGeometry(fam, cfg.dim, cfg.kappa, cfg.radius, cfg.alpha)
    if fam == Family.REAL:
        lhs = RadialGeometry.warped(cfg.dim, WarpingFunction.sn(cfg.lhs_kappa), cfg.radius, cfg.alpha)
    else:
        lhs = RadialGeometry(fam, cfg.dim, cfg.kappa, cfg.radius, cfg.alpha, damping=cfg.damping)
    return C.ComparisonScenario(f"custom-{fam.value}", lhs, rhs, cfg.direction, cfg.hypothesis)


def _exit_for(reports) -> int:
    if any(r.verdict == "not-applicable" for r in reports):
        return EXIT_CONFIG
    return EXIT_OK if all(r.verdict == "pass" for r in reports) else EXIT_FAIL


def run_compare(cfg: RunConfig):
    tg = TimeGrid.of(cfg.times) if cfg.times else None
    if cfg.preset:
        reports = S.PRESETS[cfg.preset](N=cfg.grid, tgrid=tg, seed=cfg.seed, draws=cfg.draws)
    else:
        sc = _custom_scenario(cfg)
        reports = [
            C.kernel_compare(sc, tg or TimeGrid.geometric(0.01, 2.0, 24), N=cfg.grid, k=cfg.modes),
            C.eigen_compare(sc, N=cfg.grid),
        ]
    payload = _envelope(cfg, [r.to_json() for r in reports])
    return payload, C.reports_to_csv(reports), _exit_for(reports)


def run_suite(cfg: RunConfig):
    t0 = time.perf_counter()
    results = S.run_suite(cfg.only, N=cfg.grid, seed=cfg.seed, jobs=cfg.jobs)
    for r in results:
        print(r.line(), file=sys.stderr)
    payload = _envelope(cfg, [r.to_dict() for r in results])
    payload["timing"] = {"total_s": time.perf_counter() - t0, "per_criterion_s": [r.runtime for r in results]}
    csv_text = "criterion,name,status\n" + "".join(
        f"{r.number},{r.name},{'pass' if r.passed else 'fail'}\n" for r in results
    )
    return payload, csv_text, EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {"eigen": run_eigen, "kernel": run_kernel, "compare": run_compare, "suite": run_suite}


# ---------------------------------------------------------------------------
# output


def atomic_write(path: Path, text: str):
    """Write through a temporary file in the same directory, then rename into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _destination(cfg: RunConfig) -> Optional[Path]:
    if cfg.out:
        return Path(cfg.out)
    base = os.environ.get(OUT_ENV)
    if base:
        stem = cfg.command + (f"-{cfg.preset}" if cfg.preset else "")
        return Path(base) / f"{stem}.{cfg.format}"
    return None


def dump_json(payload: dict) -> str:
    return json.dumps(C.jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        payload, csv_text, code = COMMANDS[cfg.command](cfg)
    except (ConfigError, GeometryError, PreconditionError, TruncationError, ValueError) as exc:
        print(f"robinheat: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = dump_json(payload) if cfg.format == "json" else csv_text
    dest = _destination(cfg)
    if dest is None:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head); silence the flush at exit
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    else:
        atomic_write(dest, text)
        print(f"wrote {dest}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
