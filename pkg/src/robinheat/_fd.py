"""Fourth-order finite differences on uniform grids and endpoint extrapolation."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

_C1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_C2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
# one-sided rows for the first two nodes (mirrored for the last two)
_L1 = [np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0, np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0]
_L2 = [
    np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0,
    np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0,
]


def d1(y, h, even_left=False):
    """First derivative along the last axis.

    With ``even_left`` the data is extended as an even function across the
    first node, which keeps centred stencils at a symmetry centre.
    """
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    if even_left:
        yp = np.concatenate([y[..., 2:0:-1], y], axis=-1)
        out[..., :-2] = (
            _C1[0] * yp[..., :-4] + _C1[1] * yp[..., 1:-3] + _C1[3] * yp[..., 3:-1] + _C1[4] * yp[..., 4:]
        )[..., : y.shape[-1] - 2]
    else:
        out[..., 2:-2] = _C1[0] * y[..., :-4] + _C1[1] * y[..., 1:-3] + _C1[3] * y[..., 3:-1] + _C1[4] * y[..., 4:]
        out[..., 0] = y[..., :5] @ _L1[0]
        out[..., 1] = y[..., :5] @ _L1[1]
    out[..., -1] = -(y[..., -5:][..., ::-1] @ _L1[0])
    out[..., -2] = -(y[..., -5:][..., ::-1] @ _L1[1])
    return out / h


def d2(y, h, even_left=False):
    """Second derivative along the last axis, same stencil layout as :func:`d1`."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    if even_left:
        yp = np.concatenate([y[..., 2:0:-1], y], axis=-1)
        out[..., :-2] = (
            _C2[0] * yp[..., :-4] + _C2[1] * yp[..., 1:-3] + _C2[2] * yp[..., 2:-2] + _C2[3] * yp[..., 3:-1] + _C2[4] * yp[..., 4:]
        )[..., : y.shape[-1] - 2]
    else:
        out[..., 2:-2] = (
            _C2[0] * y[..., :-4] + _C2[1] * y[..., 1:-3] + _C2[2] * y[..., 2:-2] + _C2[3] * y[..., 3:-1] + _C2[4] * y[..., 4:]
        )
        out[..., 0] = y[..., :6] @ _L2[0]
        out[..., 1] = y[..., :6] @ _L2[1]
    out[..., -1] = y[..., -6:][..., ::-1] @ _L2[0]
    out[..., -2] = y[..., -6:][..., ::-1] @ _L2[1]
    return out / (h * h)


def resample_uniform(r, y, new_x, x_of_r_inverse, dy_right):
    """Interpolate samples ``y(r)`` (even in ``r``) at ``r = x_of_r_inverse(new_x)``.

    ``dy_right`` is the known slope at the last node (Robin data); the left
    end is clamped to zero slope by symmetry.
    """
    y = np.atleast_2d(y)
    dy_right = np.atleast_1d(dy_right)
    rr = x_of_r_inverse(new_x)
    out = np.empty((y.shape[0], np.size(new_x)))
    for i, row in enumerate(y):
        spl = CubicSpline(r, row, bc_type=((1, 0.0), (1, float(dy_right[i]))))
        out[i] = spl(rr)
    return out


def extrapolate_to_zero(x, y, degree=6, orders=3):
    """Least-squares polynomial fit of ``y(x)`` and its derivatives at ``x = 0``.

    Returns ``[y(0), y'(0), ..., y^(orders-1)(0)]``. ``x`` may lie on either
    side of zero.
    """
    x = np.asarray(x, dtype=float)
    scale = np.abs(x).max()
    coef = np.polynomial.polynomial.polyfit(x / scale, y, degree)
    fact = np.cumprod([1.0] + list(range(1, orders)))
    return np.array([coef[k] * fact[k] / scale**k for k in range(orders)])
