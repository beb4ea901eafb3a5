"""Radial geometries: curvature-normalized sine, weights, drifts and substitutions.

Every supported ball is reduced to a radial weight ``w(r)`` (area density of
the geodesic sphere of radius ``r``, without the unit-sphere constant) and the
drift ``c(r) = w'(r)/w(r)``, so the radial Laplacian reads
``u'' + c(r) u' = (1/w) (w u')'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.special import gammaln

# |kappa| r^2 below this uses the Taylor series of sn_kappa
SERIES_THRESHOLD = 1e-6


class GeometryError(ValueError):
    """Raised when a geometry or an argument lies outside its valid domain."""


class Family(str, Enum):
    REAL = "real"
    KAHLER = "kahler"
    QUATERNION = "quaternion"
    WARPED = "warped"


def is_dirichlet(alpha: float) -> bool:
    return math.isinf(alpha) and alpha > 0


# ---------------------------------------------------------------------------
# sn_kappa


def _sn_series(kappa, r, order):
    x = kappa * r * r
    if order == 0:
        return r * (1.0 - x / 6.0 + x * x / 120.0 - x**3 / 5040.0)
    return 1.0 - x / 2.0 + x * x / 24.0 - x**3 / 720.0


def sn_eval(kappa: float, r, order: int = 0):
    """Evaluate ``sn_kappa(r)`` (order 0) or its derivative (order 1).

    ``sn_kappa`` solves ``sn'' + kappa sn = 0`` with ``sn(0) = 0``,
    ``sn'(0) = 1``. Small ``|kappa| r^2`` is handled by a Taylor series so the
    result is continuous as ``kappa`` crosses zero.
    """
    if order not in (0, 1):
        raise GeometryError(f"order must be 0 or 1, got {order}")
    if not math.isfinite(kappa):
        raise GeometryError("kappa must be finite")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or not np.all(np.isfinite(r_arr)):
        raise GeometryError("sn_kappa needs finite r >= 0")
    if kappa > 0 and np.any(r_arr > math.pi / math.sqrt(kappa) * (1 + 1e-12)):
        raise GeometryError(f"r exceeds pi/sqrt(kappa) = {math.pi / math.sqrt(kappa):.6g}")

    small = np.abs(kappa) * r_arr * r_arr < SERIES_THRESHOLD
    out = np.empty_like(r_arr)
    out[small] = _sn_series(kappa, r_arr[small], order)
    big = ~small
    if np.any(big):
        rb = r_arr[big]
        if kappa > 0:
            q = math.sqrt(kappa)
            out[big] = np.sin(q * rb) / q if order == 0 else np.cos(q * rb)
        else:
            q = math.sqrt(-kappa)
            out[big] = np.sinh(q * rb) / q if order == 0 else np.cosh(q * rb)
    if np.ndim(r) == 0:
        return float(out)
    return out


def sn_ratio(kappa: float, r):
    """``sn'_kappa / sn_kappa``, i.e. ``1/r`` for flat space."""
    return sn_eval(kappa, r, 1) / sn_eval(kappa, r, 0)


def space_form_s(kappa: float, r):
    """Closed form of ``s(r) = int_0^r sn_kappa``, written without cancellation."""
    r = np.asarray(r, dtype=float)
    x = kappa * r * r
    small = np.abs(x) < SERIES_THRESHOLD
    out = np.empty_like(r)
    out[small] = 0.5 * r[small] ** 2 * (1.0 - x[small] / 12.0 + x[small] ** 2 / 360.0)
    big = ~small
    if kappa > 0:
        q = math.sqrt(kappa)
        out[big] = 2.0 * np.sin(0.5 * q * r[big]) ** 2 / kappa
    elif kappa < 0:
        q = math.sqrt(-kappa)
        out[big] = 2.0 * np.sinh(0.5 * q * r[big]) ** 2 / (-kappa)
    return out


def space_form_r(kappa: float, s):
    """Inverse of :func:`space_form_s`."""
    s = np.asarray(s, dtype=float)
    y = 2.0 * np.maximum(s, 0.0)
    z = kappa * y
    if np.all(np.abs(z) < SERIES_THRESHOLD):
        # inverse of the series branch of space_form_s
        return np.sqrt(y * (1.0 + z / 12.0 + z * z / 90.0))
    if kappa > 0:
        q = math.sqrt(kappa)
        return 2.0 * np.arcsin(np.sqrt(np.clip(kappa * s / 2.0, 0.0, 1.0))) / q
    if kappa < 0:
        q = math.sqrt(-kappa)
        return 2.0 * np.arcsinh(np.sqrt(np.maximum(-kappa * s / 2.0, 0.0))) / q
    return np.sqrt(2.0 * np.maximum(s, 0.0))


def unit_sphere_area(n: int) -> float:
    """Area of the unit (n-1)-sphere in R^n."""
    return float(2.0 * math.exp(0.5 * n * math.log(math.pi) - gammaln(0.5 * n)))


# ---------------------------------------------------------------------------
# warping functions


@dataclass(frozen=True)
class WarpingFunction:
    """Warping ``f`` of a rotationally symmetric metric ``dr^2 + f(r)^2 dtheta^2``.

    Either ``sn_kappa`` for a given ``kappa`` (``samples is None``) or samples
    of ``f, f', f''`` on a uniform grid of ``[0, R]``.
    """

    kappa: Optional[float] = None
    samples: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = None
    radius: Optional[float] = None

    @classmethod
    def sn(cls, kappa: float) -> "WarpingFunction":
        return cls(kappa=float(kappa))

    @classmethod
    def sampled(cls, radius: float, f, df, d2f) -> "WarpingFunction":
        f, df, d2f = (np.asarray(a, dtype=float) for a in (f, df, d2f))
        if not (f.shape == df.shape == d2f.shape) or f.ndim != 1 or f.size < 8:
            raise GeometryError("sampled warping needs three equal 1-D arrays of length >= 8")
        if abs(f[0]) > 1e-12 or abs(df[0] - 1.0) > 1e-8:
            raise GeometryError("warping must satisfy f(0)=0, f'(0)=1")
        if np.any(f[1:] <= 0):
            raise GeometryError("warping must be positive on (0, R]")
        return cls(samples=(f, df, d2f), radius=float(radius))

    def __post_init__(self):
        if (self.kappa is None) == (self.samples is None):
            raise GeometryError("give exactly one of kappa or samples")

    @property
    def form(self) -> str:
        return "sn" if self.samples is None else "sampled"

    def _splines(self):
        f, df, d2f = self.samples
        r = np.linspace(0.0, self.radius, f.size)
        return CubicHermiteSpline(r, f, df), CubicHermiteSpline(r, df, d2f), r

    def evaluate(self, r) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``f, f', f''`` at ``r``."""
        r = np.asarray(r, dtype=float)
        if self.samples is None:
            f = sn_eval(self.kappa, r, 0)
            return np.asarray(f), np.asarray(sn_eval(self.kappa, r, 1)), -self.kappa * np.asarray(f)
        if np.any(r > self.radius * (1 + 1e-12)):
            raise GeometryError("r beyond sampled warping range")
        fs, dfs, _ = self._splines()
        return fs(r), dfs(r), dfs.derivative()(r)

    def to_dict(self) -> dict:
        if self.samples is None:
            return {"form": "sn", "kappa": self.kappa}
        return {
            "form": "sampled",
            "radius": self.radius,
            "f": self.samples[0].tolist(),
            "df": self.samples[1].tolist(),
            "d2f": self.samples[2].tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WarpingFunction":
        if d["form"] == "sn":
            return cls.sn(d["kappa"])
        return cls.sampled(d["radius"], d["f"], d["df"], d["d2f"])


# ---------------------------------------------------------------------------
# radial geometry


@dataclass(frozen=True)
class RadialGeometry:
    """A model ball or warped-product ball of radius ``R`` with Robin parameter ``alpha``.

    ``m`` is the real dimension for ``real``/``warped``, the complex dimension
    for ``kahler`` and the quaternionic dimension for ``quaternion``.
    ``alpha = inf`` selects the Dirichlet condition. ``damping >= 0`` multiplies
    the weight by ``exp(-damping r^2 / 2)``, lowering the drift by
    ``damping * r``; it models a manifold whose Laplacian of the distance lies
    below the model one.
    """

    family: Family
    m: int
    kappa: float
    R: float
    alpha: float
    warping: Optional[WarpingFunction] = None
    damping: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "alpha", float(self.alpha))
        if int(self.m) != self.m or self.m < 1:
            raise GeometryError(f"dimension must be a positive integer, got {self.m}")
        if self.family in (Family.REAL, Family.WARPED) and self.m < 2:
            raise GeometryError("real dimension must be at least 2")
        if not (math.isfinite(self.R) and self.R > 0):
            raise GeometryError("radius must be positive and finite")
        if not math.isfinite(self.kappa):
            raise GeometryError("kappa must be finite")
        if math.isnan(self.alpha) or self.alpha == -math.inf:
            raise GeometryError("alpha must be a real number or +inf")
        if self.damping < 0 or not math.isfinite(self.damping):
            raise GeometryError("damping must be finite and nonnegative")
        if self.family == Family.WARPED:
            if self.warping is None:
                raise GeometryError("warped family needs a warping function")
            if self.warping.samples is not None and self.warping.radius < self.R * (1 - 1e-12):
                raise GeometryError("sampled warping does not cover [0, R]")
            if self.warping.kappa is not None and self.warping.kappa > 0:
                if self.R >= math.pi / math.sqrt(self.warping.kappa):
                    raise GeometryError("warping sn_kappa vanishes inside the ball")
        elif self.warping is not None:
            raise GeometryError("only the warped family takes a warping function")
        if self.kappa > 0 and self.family == Family.REAL:
            if self.R >= math.pi / math.sqrt(self.kappa):
                raise GeometryError("R must be below pi/sqrt(kappa)")
        if self.kappa > 0 and self.family in (Family.KAHLER, Family.QUATERNION):
            if self.R >= math.pi / (2.0 * math.sqrt(self.kappa)):
                raise GeometryError("R must be below pi/(2 sqrt(kappa))")
        if self.family == Family.WARPED:
            r = np.linspace(0.0, self.R, 257)[1:]
            if np.any(self.warping.evaluate(r)[0] <= 0):
                raise GeometryError("warping must be positive on (0, R]")

    # -- convenience constructors -------------------------------------------------

    @classmethod
    def real(cls, m, kappa, R, alpha, **kw) -> "RadialGeometry":
        return cls(Family.REAL, m, kappa, R, alpha, **kw)

    @classmethod
    def kahler(cls, m, kappa, R, alpha, **kw) -> "RadialGeometry":
        return cls(Family.KAHLER, m, kappa, R, alpha, **kw)

    @classmethod
    def quaternion(cls, m, kappa, R, alpha, **kw) -> "RadialGeometry":
        return cls(Family.QUATERNION, m, kappa, R, alpha, **kw)

    @classmethod
    def warped(cls, m, warping: WarpingFunction, R, alpha, kappa=0.0, **kw) -> "RadialGeometry":
        return cls(Family.WARPED, m, kappa, R, alpha, warping=warping, **kw)

    def with_alpha(self, alpha: float) -> "RadialGeometry":
        return RadialGeometry(self.family, self.m, self.kappa, self.R, alpha, self.warping, self.damping)

    def with_radius(self, R: float) -> "RadialGeometry":
        return RadialGeometry(self.family, self.m, self.kappa, R, self.alpha, self.warping, self.damping)

    # -- derived data ----------------------------------------------------------------

    @property
    def real_dim(self) -> int:
        return {Family.KAHLER: 2, Family.QUATERNION: 4}.get(self.family, 1) * self.m

    @property
    def sphere_area(self) -> float:
        return unit_sphere_area(self.real_dim)

    @property
    def dirichlet(self) -> bool:
        return is_dirichlet(self.alpha)

    @property
    def is_space_form(self) -> bool:
        return self.family == Family.REAL and self.damping == 0.0

    def weight(self, r) -> np.ndarray:
        """Radial area density ``w(r)`` without the unit-sphere constant."""
        r = np.asarray(r, dtype=float)
        m, k = self.m, self.kappa
        if self.family == Family.REAL:
            w = sn_eval(k, r) ** (m - 1)
        elif self.family == Family.KAHLER:
            w = sn_eval(k, r) ** (2 * m - 2) * sn_eval(4 * k, r)
        elif self.family == Family.QUATERNION:
            w = sn_eval(k, r) ** (4 * m - 4) * sn_eval(4 * k, r) ** 3
        else:
            w = self.warping.evaluate(r)[0] ** (m - 1)
        if self.damping:
            w = w * np.exp(-0.5 * self.damping * r * r)
        return np.asarray(w)

    def drift(self, r) -> np.ndarray:
        """``c(r) = w'(r) / w(r)`` for ``r > 0``."""
        r = np.asarray(r, dtype=float)
        m, k = self.m, self.kappa
        if self.family == Family.REAL:
            c = (m - 1) * sn_ratio(k, r)
        elif self.family == Family.KAHLER:
            c = (2 * m - 2) * sn_ratio(k, r) + sn_ratio(4 * k, r)
        elif self.family == Family.QUATERNION:
            c = (4 * m - 4) * sn_ratio(k, r) + 3 * sn_ratio(4 * k, r)
        else:
            f, df, _ = self.warping.evaluate(r)
            c = (m - 1) * df / f
        return np.asarray(c) - self.damping * r

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "m": self.m,
            "kappa": self.kappa,
            "R": self.R,
            "alpha": "inf" if self.dirichlet else self.alpha,
            "warping": None if self.warping is None else self.warping.to_dict(),
            "damping": self.damping,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RadialGeometry":
        alpha = d["alpha"]
        alpha = math.inf if alpha in ("inf", "dirichlet") else float(alpha)
        warping = d.get("warping")
        return cls(
            Family(d["family"]),
            int(d["m"]),
            float(d["kappa"]),
            float(d["R"]),
            alpha,
            WarpingFunction.from_dict(warping) if warping else None,
            float(d.get("damping", 0.0)),
        )


# ---------------------------------------------------------------------------
# substitutions

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


@dataclass
class Substitution:
    """Monotone change of variable ``s(r) = int_0^r speed`` for a radial geometry.

    ``speed`` is ``w^(1/(n-1))`` with ``n`` the real dimension: ``sn_kappa``
    for space forms, ``(sn_k^(2m-2) sn_4k)^(1/(2m-1))`` for the Kahler model
    and ``(sn_k^(4m-4) sn_4k^3)^(1/(4m-1))`` for the quaternionic one. In the
    ``s`` variable the radial heat operator becomes
    ``speed^2 d^2/ds^2 + n speed' d/ds``.
    """

    geom: RadialGeometry
    n_table: int = 4097
    _r_tab: np.ndarray = field(init=False, repr=False)
    _s_tab: np.ndarray = field(init=False, repr=False)
    _inv: Callable = field(init=False, repr=False)

    def __post_init__(self):
        g = self.geom
        if g.damping:
            raise GeometryError("substitutions are defined for undamped geometries only")
        self._r_tab = np.linspace(0.0, g.R, self.n_table)
        if g.is_space_form:
            self._s_tab = space_form_s(g.kappa, self._r_tab)
        else:
            a, b = self._r_tab[:-1], self._r_tab[1:]
            self._s_tab = np.concatenate([[0.0], np.cumsum(self._panel(a, b))])
        # r is a smooth function of sqrt(2 s) near the centre
        self._inv = PchipInterpolator(np.sqrt(2.0 * self._s_tab), self._r_tab)

    @property
    def exponent(self) -> float:
        return 1.0 / (self.geom.real_dim - 1)

    def speed(self, r):
        r = np.asarray(r, dtype=float)
        if self.geom.family == Family.REAL:
            return np.asarray(sn_eval(self.geom.kappa, r))
        if self.geom.family == Family.WARPED:
            return np.asarray(self.geom.warping.evaluate(r)[0])
        return self.geom.weight(r) ** self.exponent

    def speed_prime(self, r):
        """Derivative of the speed; equals ``speed * c / (n - 1)``."""
        r = np.asarray(r, dtype=float)
        if self.geom.family == Family.REAL:
            return np.asarray(sn_eval(self.geom.kappa, r, 1))
        if self.geom.family == Family.WARPED:
            return np.asarray(self.geom.warping.evaluate(r)[1])
        out = np.ones_like(r)
        pos = r > 0
        out[pos] = self.speed(r[pos]) * self.geom.drift(r[pos]) * self.exponent
        return out

    def _panel(self, a, b):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes = mid[..., None] + half[..., None] * _GL_X
        return half * (self.speed(nodes) @ _GL_W)

    def s_of_r(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0) or np.any(r > self.geom.R * (1 + 1e-12)):
            raise GeometryError("r outside [0, R]")
        if self.geom.is_space_form:
            return space_form_s(self.geom.kappa, r)
        dr = self._r_tab[1]
        i = np.clip((r / dr).astype(int), 0, self.n_table - 1)
        return self._s_tab[i] + self._panel(self._r_tab[i], r)

    def r_of_s(self, s):
        s = np.asarray(s, dtype=float)
        if self.geom.is_space_form:
            return space_form_r(self.geom.kappa, s)
        r = np.clip(self._inv(np.sqrt(2.0 * np.maximum(s, 0.0))), 0.0, self.geom.R)
        for _ in range(3):
            v = self.speed(r)
            step = np.where(v > 0, (self.s_of_r(r) - s) / np.where(v > 0, v, 1.0), 0.0)
            r = np.clip(r - step, 0.0, self.geom.R)
        return r

    @property
    def s_max(self) -> float:
        return float(self._s_tab[-1])


def substitution_for(geom: RadialGeometry) -> Substitution:
    return Substitution(geom)


# ---------------------------------------------------------------------------
# curvature hypotheses for warped products


class Hypothesis(str, Enum):
    RICCI_LOWER = "RicciLower"
    SECT_UPPER = "SectUpper"


@dataclass
class HypothesisReport:
    mode: str
    kappa: float
    passed: bool
    margin: float
    worst_r: float
    formulas: str
    excluded_below: float
    indeterminate: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


CURVATURE_FORMULAS = (
    "warped product dr^2 + f^2 g_S: radial sectional K_rad = -f''/f, "
    "tangential sectional K_tan = (1 - f'^2)/f^2; Ric(dr) = (m-1) K_rad, "
    "Ric(tangent) = K_rad + (m-2) K_tan"
)


def warped_curvatures(warping: WarpingFunction, r):
    """Radial and tangential sectional curvatures of ``dr^2 + f^2 g_S`` at ``r > 0``."""
    f, df, d2f = warping.evaluate(r)
    return -d2f / f, (1.0 - df * df) / (f * f)


def hypothesis_check(
    warping: WarpingFunction,
    kappa: float,
    mode: str,
    m: int,
    R: float,
    n: int = 2049,
    tol: float = 1e-9,
) -> HypothesisReport:
    """Check a curvature bound of the warped ball ``B(R)`` on a uniform grid.

    ``RicciLower`` asks Ric >= (m-1) kappa, ``SectUpper`` asks sectional
    curvature <= kappa. The formulas are singular at ``r = 0``; nodes below
    ``R/512`` are skipped and the report is flagged when the worst node sits
    at the edge of that excluded zone.
    """
    mode = Hypothesis(mode)
    r = np.linspace(0.0, R, n)
    r_min = R / 512
    r = r[r >= r_min]
    k_rad, k_tan = warped_curvatures(warping, r)
    if mode == Hypothesis.RICCI_LOWER:
        ric = np.minimum((m - 1) * k_rad, k_rad + (m - 2) * k_tan) if m > 2 else (m - 1) * k_rad
        slack = ric - (m - 1) * kappa
    else:
        slack = kappa - np.maximum(k_rad, k_tan) if m > 2 else kappa - k_rad
    i = int(np.argmin(slack))
    margin = float(slack[i])
    return HypothesisReport(
        mode=mode.value,
        kappa=float(kappa),
        passed=margin >= -tol,
        margin=margin,
        worst_r=float(r[i]),
        formulas=CURVATURE_FORMULAS,
        excluded_below=float(r_min),
        indeterminate=(i == 0 and abs(margin) <= 10 * tol),
    )
