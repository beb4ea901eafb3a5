"""Acceptance battery and canonical comparison presets.

Each ``criterion_*`` function runs one acceptance item at the desk-scale
resolution (N = 2049, 300 modes) and returns a :class:`CriterionResult`.
The CLI ``suite`` command and ``tests/test_acceptance.py`` both call these.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import jn_zeros

from . import compare as C
from .geometry import RadialGeometry, WarpingFunction
from .heat import TimeGrid, kernel_spectral, kernel_timestep, substituted_diagnostics
from .sturm import (
    DEFAULT_N,
    first_mode_diagnostics,
    g_limit_diagnostics,
    lambda_lower_bound_check,
    solve,
)

DEFAULT_SEED = 20240917


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    runtime: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number:2d}: {self.name}"

    def to_dict(self) -> dict:
        return C.jsonable(
            {"number": self.number, "name": self.name, "passed": self.passed, "detail": self.detail}
        )


def _timed(number: int, name: str):
    def wrap(fn: Callable[..., dict]):
        def run(**kw) -> CriterionResult:
            t0 = time.perf_counter()
            detail = fn(**kw)
            passed = bool(detail.pop("passed"))
            return CriterionResult(number, name, passed, detail, time.perf_counter() - t0)

        run.number, run.title, run.__doc__ = number, name, fn.__doc__
        run.__name__ = fn.__name__
        return run

    return wrap


# ---------------------------------------------------------------------------
# criteria


@_timed(1, "closed-form eigenvalues")
def criterion_closed_form(N: int = DEFAULT_N) -> dict:
    """Robin flat ball m=3 against pi^2/4, Dirichlet flat disk against j_{0,1}^2."""
    lam_robin = solve(RadialGeometry.real(3, 0.0, 1.0, 1.0), N, 4).lambda1
    lam_dir = solve(RadialGeometry.real(2, 0.0, 1.0, math.inf), N, 4).lambda1
    exact_dir = float(jn_zeros(0, 1)[0] ** 2)
    err_r, err_d = abs(lam_robin - math.pi**2 / 4), abs(lam_dir - exact_dir)
    return {
        "passed": err_r < 1e-4 and err_d < 1e-3,
        "robin_lambda1": lam_robin,
        "robin_error": err_r,
        "dirichlet_lambda1": lam_dir,
        "dirichlet_error": err_d,
    }


@_timed(2, "Neumann zero eigenvalue and mass conservation")
def criterion_neumann(N: int = DEFAULT_N) -> dict:
    """``|lambda_1| < 1e-8`` and kernel mass within 1e-6 of one on [0.01, 2]."""
    tg = TimeGrid.geometric(0.01, 2.0, 40)
    out = {"cases": []}
    ok = True
    for m, kappa in ((3, 0.0), (2, 1.0), (3, -1.0)):
        g = RadialGeometry.real(m, kappa, 1.0, 0.0)
        spec = solve(g, N)
        fs = kernel_spectral(spec, tg)
        fc = kernel_timestep(g, tg)
        drift_s = float(np.max(np.abs(fs.mass() - 1.0)))
        drift_c = float(np.max(np.abs(fc.mass_history[:, 1] - 1.0)))
        case_ok = abs(spec.lambda1) < 1e-8 and drift_s < 1e-6 and drift_c < 1e-6
        ok &= case_ok
        out["cases"].append(
            {"m": m, "kappa": kappa, "lambda1": spec.lambda1, "spectral_mass_drift": drift_s, "timestep_mass_drift": drift_c}
        )
    out["passed"] = ok
    return out


@_timed(3, "spectral vs Crank-Nicolson kernels")
def criterion_cross_validation(N: int = DEFAULT_N) -> dict:
    """Pointwise relative gap below 1e-3 on t in [0.05, 1] for three curvatures and three alphas."""
    tg = TimeGrid.geometric(0.05, 1.0, 12)
    worst = 0.0
    cases = []
    for kappa in (0.0, 1.0, -1.0):
        for alpha in (0.5, 1.0, 2.0):
            g = RadialGeometry.real(3, kappa, 1.0, alpha)
            hs = kernel_spectral(solve(g, N), tg).values
            hc = kernel_timestep(g, tg, N=N).values
            rel = float(np.max(np.abs(hs - hc) / np.abs(hs)))
            worst = max(worst, rel)
            cases.append({"kappa": kappa, "alpha": alpha, "max_relative_gap": rel})
    return {"passed": worst < 1e-3, "max_relative_gap": worst, "cases": cases}


def _curvature_scenarios(m: int, R: float = 1.0, alpha: float = 1.0):
    flat = RadialGeometry.real(m, 0.0, R, alpha)
    return [
        C.ComparisonScenario(
            f"sphere-vs-flat-m{m}",
            RadialGeometry.warped(m, WarpingFunction.sn(1.0), R, alpha),
            flat,
            C.Direction.LHS_GEQ,
            C.ScenarioHypothesis.RICCI_LOWER,
        ),
        C.ComparisonScenario(
            f"hyperbolic-vs-flat-m{m}",
            RadialGeometry.warped(m, WarpingFunction.sn(-1.0), R, alpha),
            flat,
            C.Direction.LHS_LEQ,
            C.ScenarioHypothesis.SECT_UPPER,
        ),
    ]


@_timed(4, "curvature kernel comparisons")
def criterion_kernel_comparison(N: int = DEFAULT_N) -> dict:
    """Sphere >= flat and hyperbolic <= flat pointwise at N and 2N-1."""
    tg = TimeGrid.geometric(0.01, 2.0, 24)
    reports = [C.kernel_compare(sc, tg, N=N) for m in (2, 3) for sc in _curvature_scenarios(m)]
    return {
        "passed": all(r.verdict == "pass" for r in reports),
        "reports": [
            {
                "id": r.scenario_id,
                "verdict": r.verdict,
                "max_violation": r.max_violation,
                "tolerance": r.tolerance,
                "stable_under_refinement": all(v.status == "pass" for v in r.checks),
                "min_gap": r.details.get("min_gap"),
            }
            for r in reports
        ],
    }


@_timed(5, "eigenvalue comparisons across a curvature sweep")
def criterion_eigen_sweep(N: int = DEFAULT_N) -> dict:
    """Consecutive curvatures ordered, log-slopes within 1e-3 of lambda_1, for m = 2, 3."""
    reports = [r for m in (2, 3) for r in C.kappa_sweep(m, 1.0, 1.0, N=N)]
    lam = {}
    for r in reports:
        lam[(r.scenario["rhs"]["m"], r.scenario["rhs"]["kappa"])] = r.details["lambda_rhs"]
        lam[(r.scenario["lhs"]["m"], r.scenario["lhs"]["warping"]["kappa"])] = r.details["lambda_lhs"]
    monotone = all(
        lam[(m, a)] >= lam[(m, b)] for m in (2, 3) for a, b in zip((-1.0, -0.5, 0.0, 0.5), (-0.5, 0.0, 0.5, 1.0))
    )
    return {
        "passed": monotone and all(r.verdict == "pass" for r in reports),
        "lambda1": {f"m={m},kappa={k:g}": v for (m, k), v in sorted(lam.items())},
        "verdicts": {r.scenario_id: r.verdict for r in reports},
    }


@_timed(6, "monotonicity in alpha")
def criterion_alpha_ordering(N: int = DEFAULT_N) -> dict:
    """Dirichlet < alpha=2 < alpha=1 < alpha=0.5 < Neumann pointwise, flat m=3."""
    rep = C.alpha_ordering(RadialGeometry.real(3, 0.0, 1.0, 1.0), (0.5, 1.0, 2.0), TimeGrid.geometric(0.05, 2.0, 24), N=N)
    return {
        "passed": rep.verdict == "pass",
        "min_gaps": {v.name: v.margin for v in rep.checks},
        "worst": rep.worst,
    }


@_timed(7, "lambda_1 >= m kappa at the gate radius")
def criterion_gate_lower_bound(N: int = DEFAULT_N) -> dict:
    """m=2, kappa=1, alpha=2, R=arctan 2."""
    g = RadialGeometry.real(2, 1.0, math.atan(2.0), 2.0)
    spec = solve(g, N, 4)
    v = lambda_lower_bound_check(g, spec)
    return {"passed": v.status == "pass" and v.margin > 0, "lambda1": spec.lambda1, "margin": v.margin}


def _sign_models():
    return [
        RadialGeometry.real(3, 0.0, 1.0, 1.0),
        RadialGeometry.real(3, 1.0, 1.0, 2.0),
        RadialGeometry.real(3, -1.0, 1.0, 1.0),
    ]


@_timed(8, "sign properties of the substituted kernel")
def criterion_sign_suite(N: int = DEFAULT_N) -> dict:
    """phi' < 0, phi'' > 0, centre formula within 1%, boundary identity, at t = 0.05, 0.2, 1."""
    tg = TimeGrid.of([0.05, 0.2, 1.0])
    ok = True
    cases = []
    for g in _sign_models():
        spec = solve(g, N)
        sk = substituted_diagnostics(kernel_spectral(spec, tg), spec=spec)
        case_ok = sk.gate_met and all(v.status == "pass" for v in sk.verdicts)
        ok &= case_ok
        cases.append(
            {
                "kappa": g.kappa,
                "alpha": g.alpha,
                "passed": case_ok,
                "statuses": {v.name: v.status for v in sk.verdicts},
                "k3_residual": sk.k3_residual,
            }
        )
    return {"passed": ok, "cases": cases}


@_timed(9, "centre limits of g")
def criterion_g_limits(N: int = DEFAULT_N) -> dict:
    """|g(0)|, |g'(0)| < 1e-5 and g''(0) within 1% of its closed form, flat and kappa=1."""
    ok = True
    cases = []
    for g in (RadialGeometry.real(3, 0.0, 1.0, 1.0), RadialGeometry.real(3, 1.0, 1.0, 2.0)):
        lim = g_limit_diagnostics(first_mode_diagnostics(solve(g, N, 4)))
        case_ok = abs(lim.g0) < 1e-5 and abs(lim.g1) < 1e-5 and lim.rel_error < 0.01
        ok &= case_ok
        cases.append({"kappa": g.kappa, "g0": lim.g0, "g1": lim.g1, "g2": lim.g2, "g2_expected": lim.g2_expected})
    return {"passed": ok, "cases": cases}


@_timed(10, "flat Kahler and quaternionic degenerations")
def criterion_degeneration(N: int = DEFAULT_N) -> dict:
    """kappa=0 Kahler of complex dim m equals real dim 2m; quaternionic dim m equals real dim 4m."""
    worst = 0.0
    cases = []
    for m in (1, 2, 3):
        lr2 = solve(RadialGeometry.real(2 * m, 0.0, 1.0, 1.0), N, 4).lambda1
        lk = solve(RadialGeometry.kahler(m, 0.0, 1.0, 1.0), N, 4).lambda1
        lr4 = solve(RadialGeometry.real(4 * m, 0.0, 1.0, 1.0), N, 4).lambda1
        lq = solve(RadialGeometry.quaternion(m, 0.0, 1.0, 1.0), N, 4).lambda1
        worst = max(worst, abs(lk - lr2), abs(lq - lr4))
        cases.append({"m": m, "kahler": lk, "real_2m": lr2, "quaternion": lq, "real_4m": lr4})
    return {"passed": worst < 1e-6, "max_difference": worst, "cases": cases}


def transplant_models():
    return [
        RadialGeometry.real(3, 0.0, 1.0, 1.0),
        RadialGeometry.real(3, 1.0, 1.0, 2.0),
        RadialGeometry.real(3, -1.0, 1.0, 1.0),
    ]


def gamma_sweep(model: RadialGeometry, draws: int, seed: int, tgrid: TimeGrid, N: int = DEFAULT_N) -> list:
    """Transplant and Barta reports for ``draws`` seeded random gamma fields and boundary angles."""
    rng = np.random.default_rng(seed)
    reports = []
    for i in range(draws):
        ts = C.TransplantScenario(
            f"gamma-draw-{i}",
            model,
            C.random_gamma(rng, low=0.05),
            boundary_angle=float(rng.uniform(-1.0, 1.0)),
            seed=seed,
        )
        reports.append(C.transplant_check(ts, tgrid, N=N))
        reports.append(C.barta_bound(ts, N=N))
    return reports


@_timed(11, "transplant supersolutions and Barta certificates")
def criterion_transplant(N: int = DEFAULT_N, draws: int = 100, seed: int = DEFAULT_SEED) -> dict:
    """gamma = 1 equality case, then seeded random gamma fields on three models."""
    tg = TimeGrid.of([0.05, 0.1, 0.2, 0.5, 1.0])
    ok = True
    cases = []
    for model in transplant_models():
        ident = C.TransplantScenario("identity", model, 1.0)
        t_rep, b_rep = C.transplant_check(ident, tg, N=N), C.barta_bound(ident, N=N)
        eq = [v for v in b_rep.checks if v.name.startswith("equality case")]
        zero_margin = t_rep.details.get("margin_over_model") == 0.0
        ident_ok = t_rep.verdict == "pass" and b_rep.verdict == "pass" and zero_margin and eq and eq[0].status == "pass"
        sweep = gamma_sweep(model, draws, seed, tg, N=N)
        failed = [r.scenario_id + ":" + r.kind for r in sweep if r.verdict != "pass"]
        ok &= bool(ident_ok) and not failed
        cases.append(
            {
                "kappa": model.kappa,
                "alpha": model.alpha,
                "identity_pass": bool(ident_ok),
                "certified_bound": b_rep.details.get("certified_lower_bound"),
                "draws": draws,
                "failed": failed,
            }
        )
    return {"passed": ok, "seed": seed, "cases": cases}


CRITERIA = [
    criterion_closed_form,
    criterion_neumann,
    criterion_cross_validation,
    criterion_kernel_comparison,
    criterion_eigen_sweep,
    criterion_alpha_ordering,
    criterion_gate_lower_bound,
    criterion_sign_suite,
    criterion_g_limits,
    criterion_degeneration,
    criterion_transplant,
]


def _run_one(index: int, N: int, seed: int) -> CriterionResult:
    fn = CRITERIA[index]
    kw = {"N": N}
    if fn is criterion_transplant:
        kw["seed"] = seed
    return fn(**kw)


def run_suite(
    only: Optional[list] = None, N: int = DEFAULT_N, seed: int = DEFAULT_SEED, jobs: int = 1
) -> list:
    """Run the selected criteria (1-based numbers) and return results in criterion order."""
    idx = [i for i in range(len(CRITERIA)) if only is None or (i + 1) in only]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, idx, [N] * len(idx), [seed] * len(idx)))
    return [_run_one(i, N, seed) for i in idx]


# ---------------------------------------------------------------------------
# presets


def preset_sphere_vs_flat(N: int = DEFAULT_N, tgrid: Optional[TimeGrid] = None, **_) -> list:
    sc = _curvature_scenarios(2)[0]
    tg = tgrid or TimeGrid.geometric(0.01, 2.0, 24)
    return [C.kernel_compare(sc, tg, N=N), C.eigen_compare(sc, N=N)]


def preset_hyperbolic_vs_flat(N: int = DEFAULT_N, tgrid: Optional[TimeGrid] = None, **_) -> list:
    sc = _curvature_scenarios(2)[1]
    tg = tgrid or TimeGrid.geometric(0.01, 2.0, 24)
    return [C.kernel_compare(sc, tg, N=N), C.eigen_compare(sc, N=N)]


def preset_kahler_degeneration(N: int = DEFAULT_N, tgrid: Optional[TimeGrid] = None, **_) -> list:
    """Flat Kahler model against real dimension 2m, then a drift-perturbed Kahler comparison."""
    t0 = time.perf_counter()
    res = criterion_degeneration(N=N)
    reports = [
        C.ComparisonReport(
            "kahler-degeneration",
            "degeneration",
            "pass" if res.passed else "fail",
            max_violation=res.detail["max_difference"],
            tolerance=1e-6,
            grids={"N": N},
            details=res.detail,
            runtime=time.perf_counter() - t0,
        )
    ]
    model = RadialGeometry.kahler(2, 0.5, 1.0, 1.0)
    sc = C.ComparisonScenario(
        "kahler-drift-perturbation",
        RadialGeometry.kahler(2, 0.5, 1.0, 1.0, damping=0.5),
        model,
        C.Direction.LHS_GEQ,
        C.ScenarioHypothesis.KAHLER_BOUNDS,
    )
    tg = tgrid or TimeGrid.geometric(0.01, 2.0, 24)
    reports.append(C.kernel_compare(sc, tg, N=N))
    reports.append(C.eigen_compare(sc, N=N))
    probe = C.kahler_sharpness_probe(2, 0.5, 1.0, 1.0, tg, N=N)
    reports[0].details["sharpness_probe"] = probe
    return reports


def preset_transplant_gamma_sweep(
    N: int = DEFAULT_N, tgrid: Optional[TimeGrid] = None, seed: int = DEFAULT_SEED, draws: int = 100, **_
) -> list:
    tg = tgrid or TimeGrid.of([0.05, 0.1, 0.2, 0.5, 1.0])
    return gamma_sweep(RadialGeometry.real(3, 1.0, 1.0, 2.0), draws, seed, tg, N=N)


PRESETS = {
    "sphere-vs-flat": preset_sphere_vs_flat,
    "hyperbolic-vs-flat": preset_hyperbolic_vs_flat,
    "kahler-degeneration": preset_kahler_degeneration,
    "transplant-gamma-sweep": preset_transplant_gamma_sweep,
}
