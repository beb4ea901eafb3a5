"""Singular Sturm-Liouville Robin eigenproblem on a radial ball.

The operator ``-(1/w)(w u')'`` is discretized by vertex-centred finite
volumes on a uniform grid. Control volumes carry the exact integral of ``w``
and faces carry point values of ``w``, so the discrete problem is a symmetric
generalized eigenproblem ``K u = lambda V u`` with tridiagonal ``K`` and
diagonal ``V``. The centre needs no special treatment: ``w(0) = 0`` so no
flux crosses it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from . import _fd
from .geometry import Family, GeometryError, RadialGeometry, sn_eval, sn_ratio, substitution_for

DEFAULT_N = 2049
MIN_N = 64

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


class ConvergenceError(RuntimeError):
    pass


class PreconditionError(ValueError):
    """An operation was called outside the hypotheses it verifies."""


def default_modes(N: int) -> int:
    return min(300, N // 4)


@dataclass(frozen=True)
class Grid:
    N: int
    R: float

    def __post_init__(self):
        if self.N < MIN_N:
            raise GeometryError(f"grid needs at least {MIN_N} nodes, got {self.N}")

    @property
    def h(self) -> float:
        return self.R / (self.N - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.R, self.N)

    def refined(self) -> "Grid":
        """Grid with half the spacing; its even nodes coincide with ours."""
        return Grid(2 * self.N - 1, self.R)


def _cell_integrals(geom: RadialGeometry, a, b):
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * (geom.weight(mid[:, None] + half[:, None] * _GL_X) @ _GL_W)


@dataclass
class DiscreteOperator:
    """Finite-volume form of ``-(1/w)(w u')'`` with Robin, Neumann or Dirichlet data at ``R``.

    ``diag``/``offdiag`` hold the stiffness matrix ``K`` on the unknowns;
    ``volumes`` the lumped mass. The symmetric matrix ``V^-1/2 K V^-1/2`` is
    what gets diagonalized.
    """

    geom: RadialGeometry
    grid: Grid
    volumes: np.ndarray
    conductances: np.ndarray
    diag: np.ndarray
    offdiag: np.ndarray

    @property
    def n_unknowns(self) -> int:
        return self.diag.size

    @property
    def dirichlet(self) -> bool:
        return self.geom.dirichlet

    def stiffness_apply(self, u) -> np.ndarray:
        """``K u`` on the unknowns (trailing axis)."""
        u = np.asarray(u, dtype=float)[..., : self.n_unknowns]
        out = self.diag * u
        out[..., :-1] += self.offdiag * u[..., 1:]
        out[..., 1:] += self.offdiag * u[..., :-1]
        return out

    def apply(self, u) -> np.ndarray:
        """Discrete ``-(1/w)(w u')'`` including the boundary row; Dirichlet pads a zero."""
        out = self.stiffness_apply(u) / self.volumes[: self.n_unknowns]
        if self.dirichlet:
            out = np.concatenate([out, np.zeros(out.shape[:-1] + (1,))], axis=-1)
        return out

    def symmetric(self) -> tuple[np.ndarray, np.ndarray]:
        s = 1.0 / np.sqrt(self.volumes[: self.n_unknowns])
        return self.diag * s * s, self.offdiag * s[:-1] * s[1:]

    def energy(self, u) -> float:
        """``int |u'|^2 w dr + alpha w(R) u(R)^2`` in discrete form."""
        u = np.asarray(u, dtype=float)
        if self.dirichlet:
            u = u.copy()
            u[-1] = 0.0
        e = float(np.sum(self.conductances * np.diff(u) ** 2))
        if not self.dirichlet and self.geom.alpha:
            e += self.geom.alpha * float(self.geom.weight(self.geom.R)) * u[-1] ** 2
        return e

    def mass(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(np.sum(self.volumes * u * u))


def assemble(geom: RadialGeometry, grid: Optional[Grid] = None) -> DiscreteOperator:
    """Build the conservative discretization of the radial Robin Laplacian."""
    grid = grid or Grid(DEFAULT_N, geom.R)
    if abs(grid.R - geom.R) > 1e-12 * geom.R:
        raise GeometryError("grid radius differs from the geometry radius")
    r, h = grid.nodes, grid.h
    w_nodes = geom.weight(r)
    near_zero = int(np.sum(w_nodes < w_nodes.max() / 100.0))
    if near_zero < 8:
        raise GeometryError(
            f"grid too coarse near the centre: {near_zero} nodes with w < max(w)/100, need 8"
        )
    edges = np.concatenate([[0.0], r[:-1] + 0.5 * h, [geom.R]])
    volumes = _cell_integrals(geom, edges[:-1], edges[1:])
    cond = geom.weight(r[:-1] + 0.5 * h) / h
    diag = np.zeros(grid.N)
    diag[:-1] += cond
    diag[1:] += cond
    if geom.dirichlet:
        diag, off = diag[:-1], -cond[:-1]
    else:
        diag[-1] += geom.alpha * float(geom.weight(geom.R))
        off = -cond
    return DiscreteOperator(geom, grid, volumes, cond, diag, off)


# ---------------------------------------------------------------------------
# spectrum


@dataclass(frozen=True)
class SpectralData:
    """Ascending Robin eigenvalues with radial eigenfunctions on the grid.

    Modes are normalized so that ``omega * sum(phi_i phi_j V) = delta_ij``
    (``omega`` the unit-sphere area), the discrete form of
    ``int_ball phi_i phi_j dmu``. Dirichlet modes carry an explicit zero at ``R``.
    """

    op: DiscreteOperator = field(repr=False)
    lambdas: np.ndarray
    modes: np.ndarray = field(repr=False)
    norm_constant: float

    @property
    def geom(self) -> RadialGeometry:
        return self.op.geom

    @property
    def grid(self) -> Grid:
        return self.op.grid

    @property
    def k(self) -> int:
        return self.lambdas.size

    @property
    def lambda1(self) -> float:
        return float(self.lambdas[0])

    @property
    def centre_values(self) -> np.ndarray:
        return self.modes[0]

    def inner(self, u, v) -> float:
        return float(self.norm_constant * np.sum(np.asarray(u) * np.asarray(v) * self.op.volumes))

    def gram(self) -> np.ndarray:
        return self.norm_constant * (self.modes.T * self.op.volumes) @ self.modes

    def rayleigh_residuals(self) -> np.ndarray:
        """Relative gap between each eigenvalue and the Rayleigh quotient of its mode."""
        q = np.array([rayleigh_discrete(self.op, phi) for phi in self.modes.T])
        return np.abs(q - self.lambdas) / np.maximum(np.abs(self.lambdas), 1.0)


def eigensolve(op: DiscreteOperator, k: Optional[int] = None) -> SpectralData:
    """Smallest ``k`` eigenpairs of the symmetrized tridiagonal system."""
    n = op.n_unknowns
    k = default_modes(op.grid.N) if k is None else int(k)
    if not 1 <= k <= op.grid.N - 2:
        raise ValueError(f"mode count must be in [1, N-2], got {k}")
    k = min(k, n)
    d, e = op.symmetric()
    try:
        vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
    except LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(f"tridiagonal eigensolver failed for {n} unknowns: {exc}") from exc
    if not np.all(np.isfinite(vals)):
        raise ConvergenceError("eigensolver returned non-finite eigenvalues")
    vol = op.volumes[:n]
    modes = vecs / np.sqrt(vol)[:, None]
    omega = op.geom.sphere_area
    modes /= math.sqrt(omega)
    sign = np.where(modes[0] < 0, -1.0, 1.0)
    modes *= sign
    # Rayleigh quotients in the unscaled form are accurate to O(residual^2)
    kv = op.stiffness_apply(modes.T)
    vals = np.einsum("ij,ij->i", kv, modes.T) / np.einsum("ij,ij,j->i", modes.T, modes.T, vol)
    order = np.argsort(vals, kind="stable")
    vals, modes = vals[order], modes[:, order]
    if op.dirichlet:
        modes = np.vstack([modes, np.zeros((1, modes.shape[1]))])
    return SpectralData(op, vals, modes, omega)


def solve(geom: RadialGeometry, N: int = DEFAULT_N, k: Optional[int] = None) -> SpectralData:
    return eigensolve(assemble(geom, Grid(N, geom.R)), k)


def rayleigh_discrete(op: DiscreteOperator, u) -> float:
    den = op.mass(u if not op.dirichlet else np.concatenate([u[:-1], [0.0]]))
    if den <= 0 or not math.isfinite(den):
        raise ZeroDivisionError("Rayleigh quotient of a zero function")
    return op.energy(u) / den


def rayleigh(u, geom: RadialGeometry) -> float:
    """Rayleigh quotient ``(int u'^2 w + alpha w(R) u(R)^2) / int u^2 w`` of grid samples ``u``."""
    u = np.asarray(u, dtype=float)
    op = assemble(geom, Grid(u.size, geom.R))
    return rayleigh_discrete(op, u)


# ---------------------------------------------------------------------------
# first-mode diagnostics


@dataclass
class Verdict:
    name: str
    status: str  # pass | fail | inconclusive | not-applicable
    margin: float = float("nan")
    worst_at: float = float("nan")
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("pass", "not-applicable")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def sign_verdict(name, violation, where, floor, detail="") -> Verdict:
    """``violation <= 0`` passes; values inside the noise floor are inconclusive."""
    i = int(np.argmax(violation))
    worst = float(violation[i])
    if worst <= 0:
        status = "pass"
    elif worst <= floor:
        status = "inconclusive"
    else:
        status = "fail"
    return Verdict(name, status, -worst, float(where[i]), detail)


@dataclass
class EigfuncDiagnostics:
    """First eigenfunction ``u`` (scaled to ``u(0) = 1``) and derived fields.

    ``g = m (sn'/sn) u' + lambda u`` for space forms. ``w`` is ``u`` on a
    uniform grid in the substituted variable ``s`` with its first two
    ``s``-derivatives.
    """

    geom: RadialGeometry
    lam: float
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    g: Optional[np.ndarray]
    s: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    d2w: np.ndarray
    noise_floor: float
    verdicts: list = field(default_factory=list)


def _robin_alpha_positive(geom: RadialGeometry):
    if not (geom.alpha > 0 and math.isfinite(geom.alpha)):
        raise PreconditionError("first-mode diagnostics need a finite Robin parameter alpha > 0")


def s_grid_fields(geom, r, values, dvalues_right, n_s=None):
    """Resample radial fields onto a uniform ``s`` grid; return ``s``, fields and two s-derivatives."""
    sub = substitution_for(geom)
    s_max = float(sub.s_of_r(geom.R))
    n_s = n_s or r.size
    s = np.linspace(0.0, s_max, n_s)
    ds = s[1]
    vals = _fd.resample_uniform(r, values, s, sub.r_of_s, dvalues_right)
    return s, vals, _fd.d1(vals, ds), _fd.d2(vals, ds), sub


def first_mode_diagnostics(spec: SpectralData, geom: Optional[RadialGeometry] = None) -> EigfuncDiagnostics:
    """Check ``u' < 0``, monotone ``(log u)'`` and ``u' >= -alpha u`` for the first mode."""
    geom = geom or spec.geom
    _robin_alpha_positive(geom)
    r, h = spec.grid.nodes, spec.grid.h
    lam = spec.lambda1
    u = spec.modes[:, 0] / spec.modes[0, 0]
    du = _fd.d1(u, h, even_left=True)
    du2 = np.gradient(u, h, edge_order=2)
    noise = 10.0 * float(np.max(np.abs(du - du2)[1:-1]))
    # the Robin row fixes the boundary slope
    du[-1] = -geom.alpha * u[-1]
    g = None
    if geom.family == Family.REAL and geom.damping == 0.0:
        g = np.empty_like(u)
        g[1:] = geom.m * sn_ratio(geom.kappa, r[1:]) * du[1:] + lam * u[1:]
        g[0] = geom.m * _fd.d2(u, h, even_left=True)[0] + lam * u[0]
    verdicts = [
        sign_verdict("u' < 0 on (0,R]", du[1:], r[1:], noise),
    ]
    dlog = du / u
    verdicts.append(
        sign_verdict("(log u)' nonincreasing", np.diff(dlog[1:]), r[2:], noise / float(np.min(u)))
    )
    verdicts.append(
        sign_verdict("u' >= -alpha u on (0,R]", -(du[1:] + geom.alpha * u[1:]), r[1:], noise)
    )
    s, (w,), (dw,), (d2w,), _ = s_grid_fields(geom, r, u, du[-1])
    return EigfuncDiagnostics(geom, lam, r, u, du, g, s, w, dw, d2w, noise, verdicts)


def within_gate(geom: RadialGeometry) -> bool:
    """``sqrt(kappa) tan(sqrt(kappa) R) <= alpha`` (with ``sqrt(kappa) R < pi/2``)."""
    if geom.kappa <= 0:
        return False
    q = math.sqrt(geom.kappa)
    return q * geom.R < math.pi / 2 and q * math.tan(q * geom.R) <= geom.alpha * (1 + 1e-12)


def gate_radius(kappa: float, alpha: float) -> float:
    """Largest radius ``arctan(alpha/sqrt(kappa))/sqrt(kappa)`` allowed by the positivity results."""
    if kappa <= 0:
        return math.inf
    q = math.sqrt(kappa)
    return math.atan(alpha / q) / q


def lambda_lower_bound_check(geom: RadialGeometry, spec: SpectralData, tol: float = 1e-8) -> Verdict:
    """``lambda_1 >= m kappa`` whenever ``sqrt(kappa) tan(sqrt(kappa) R) <= alpha``."""
    if not (geom.kappa > 0 and geom.alpha > 0):
        raise PreconditionError("the lower bound needs kappa > 0 and alpha > 0")
    if not within_gate(geom):
        return Verdict("lambda_1 >= m kappa", "not-applicable", detail="sqrt(k) tan(sqrt(k) R) > alpha")
    margin = spec.lambda1 - geom.m * geom.kappa
    return Verdict(
        "lambda_1 >= m kappa",
        "pass" if margin >= -tol else "fail",
        margin,
        detail=f"lambda_1={spec.lambda1:.10g}, m kappa={geom.m * geom.kappa:.10g}",
    )


def g_second_limit(lam: float, kappa: float, m: int, u0: float = 1.0) -> float:
    """Closed-form limit of ``g''`` at the centre: ``-2 lam (lam - kappa m) u(0) / (m (m+2))``."""
    return -2.0 * lam * (lam - kappa * m) * u0 / (m * (m + 2))


@dataclass
class GLimits:
    g0: float
    g1: float
    g2: float
    g2_expected: float
    rel_error: float
    spread: tuple
    unstable: bool
    verdicts: list


def g_limit_diagnostics(
    diag: EigfuncDiagnostics,
    lam: Optional[float] = None,
    geom: Optional[RadialGeometry] = None,
    tol0: float = 1e-5,
    rel_tol2: float = 0.01,
    window: float = 0.3,
) -> GLimits:
    """Extrapolate ``g, g', g''`` to ``r = 0`` by polynomial fits on two nested windows."""
    geom = geom or diag.geom
    if not (geom.family == Family.REAL and geom.damping == 0.0):
        raise PreconditionError("g-limits are defined for real space forms")
    lam = diag.lam if lam is None else lam
    r, u, du = diag.r, diag.u, diag.du
    g = geom.m * sn_ratio(geom.kappa, r[1:]) * du[1:] + lam * u[1:]
    rr = r[1:]
    ests = []
    for frac in (1.0, 0.5):
        sel = (rr >= 8 * r[1]) & (rr <= frac * window * geom.R)
        ests.append(_fd.extrapolate_to_zero(rr[sel], g[sel], degree=6, orders=3))
    est = ests[0]
    spread = tuple(float(x) for x in np.abs(ests[0] - ests[1]))
    expected = g_second_limit(lam, geom.kappa, geom.m, u[0])
    rel = abs(est[2] - expected) / max(abs(expected), 1e-300)
    unstable = spread[0] > 10 * tol0 or spread[1] > 10 * tol0 or spread[2] > 10 * max(rel_tol2 * abs(expected), tol0)
    verdicts = [
        Verdict("lim g = 0", "pass" if abs(est[0]) < tol0 else "fail", tol0 - abs(est[0])),
        Verdict("lim g' = 0", "pass" if abs(est[1]) < tol0 else "fail", tol0 - abs(est[1])),
        Verdict(
            "lim g'' formula",
            "pass" if rel < rel_tol2 else "fail",
            rel_tol2 - rel,
            detail=f"estimate {est[2]:.8g} vs {expected:.8g}",
        ),
    ]
    return GLimits(float(est[0]), float(est[1]), float(est[2]), expected, rel, spread, unstable, verdicts)


def w_convexity_check(diag: EigfuncDiagnostics) -> list:
    """Verify ``w' < 0`` on ``(0, s(R)]``, ``w'' > 0`` on ``[0, s(R)]`` and the Robin relation in ``s``."""
    geom = diag.geom
    _robin_alpha_positive(geom)
    if geom.kappa > 0 and not within_gate(geom):
        raise PreconditionError("kappa > 0 requires R <= arctan(alpha/sqrt(kappa))/sqrt(kappa)")
    s, dw, d2w = diag.s, diag.dw, diag.d2w
    floor = _noise_in_s(diag)
    speed_R = float(substitution_for(geom).speed(geom.R))
    bnd = speed_R * dw[-1] + geom.alpha * diag.w[-1]
    return [
        sign_verdict("w' < 0 on (0,s(R)]", dw[1:], s[1:], floor),
        sign_verdict("w'' > 0 on [0,s(R)]", -d2w, s, floor, detail="s=0 value from one-sided stencil"),
        Verdict(
            "speed(R) w'(s(R)) + alpha w(s(R)) = 0",
            "pass" if abs(bnd) <= max(floor, 1e-6) else "fail",
            float(max(floor, 1e-6) - abs(bnd)),
            float(s[-1]),
        ),
    ]


def _noise_in_s(diag: EigfuncDiagnostics) -> float:
    ds = diag.s[1]
    lo = np.gradient(diag.dw, ds, edge_order=2)
    return 10.0 * float(np.max(np.abs(lo - diag.d2w)[2:-2])) + 1e-9
