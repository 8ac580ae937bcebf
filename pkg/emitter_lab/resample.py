"""Classical upsampling baselines: piece-wise linear (LAI) and cubic-spline (CSI) interpolation.

Both methods interpolate the real and imaginary parts independently (a real
system matrix applied to complex data does exactly that) and return ``V * n``
samples for ``n`` input samples: the ``V * (n - 1) + 1`` points spanned by the
knots, then ``V - 1`` points continuing the last piece.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .synthesis import ComplexSequence

logger = logging.getLogger(__name__)

METHODS = ('lai', 'csi')


def target_rate(factor, f_low):
    """Return the upsampled rate ``F_H = V * F_L``."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"upsampling factor must be an integer >= 1, got {factor}")
    if not f_low > 0:
        raise ValueError(f"F_L must be positive, got {f_low}")
    return int(factor) * f_low


@dataclass(frozen=True, eq=False)
class KnotGrid:
    """Sample times ``tau`` (seconds, strictly increasing) and complex values ``z(tau)``."""
    tau: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.complex128)
        if tau.ndim != 1 or tau.size != values.size:
            raise ValueError(f"tau and values must be 1-D of equal length, got {tau.shape} and {values.shape}")
        if tau.size < 2:
            raise ValueError("a knot grid needs at least two knots")
        if np.any(np.diff(tau) <= 0):
            raise ValueError("knot times must be strictly increasing")
        object.__setattr__(self, 'tau', tau)
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_sequence(cls, sig):
        return cls(np.arange(len(sig)) / sig.fs, sig.samples)


@dataclass(frozen=True)
class SplinePiece:
    """Cubic ``P(t) = c0 + c1 (t - t0) + c2 (t - t0)^2 + c3 (t - t0)^3`` on ``[t0, t1]``."""
    interval: tuple
    coeffs: tuple
    end_slopes: tuple

    def __call__(self, t):
        dt = np.asarray(t) - self.interval[0]
        c0, c1, c2, c3 = self.coeffs
        return c0 + dt * (c1 + dt * (c2 + dt * c3))

    def derivative(self, t):
        dt = np.asarray(t) - self.interval[0]
        _, c1, c2, c3 = self.coeffs
        return c1 + dt * (2 * c2 + dt * 3 * c3)


def _thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system by forward elimination and back substitution.

    ``rhs`` may carry extra leading axes; the system runs along the last one.
    """
    n = diag.size
    diag = diag.astype(np.float64).copy()
    rhs = np.array(rhs, dtype=np.complex128)
    for i in range(1, n):
        m = lower[i] / diag[i - 1]
        diag[i] -= m * upper[i - 1]
        rhs[..., i] -= m * rhs[..., i - 1]
    x = np.empty_like(rhs)
    x[..., -1] = rhs[..., -1] / diag[-1]
    for i in range(n - 2, -1, -1):
        x[..., i] = (rhs[..., i] - upper[i] * x[..., i + 1]) / diag[i]
    return x


def spline_slopes(h, values):
    """Knot slopes of the not-a-knot cubic spline.

    ``h`` holds the n - 1 knot spacings, ``values`` has the n knot values on its
    last axis. Interior rows enforce continuity of the second derivative; the
    end rows make the third derivative continuous across the second and the
    second-to-last knots.
    """
    h = np.asarray(h, dtype=np.float64)
    values = np.asarray(values, dtype=np.complex128)
    n = values.shape[-1]
    if n < 4:
        raise ValueError(f"cubic-spline interpolation needs at least 4 knots, got {n}")
    delta = np.diff(values, axis=-1) / h

    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)
    rhs = np.zeros(values.shape, dtype=np.complex128)

    lower[1:-1] = h[1:]
    diag[1:-1] = 2 * (h[:-1] + h[1:])
    upper[1:-1] = h[:-1]
    rhs[..., 1:-1] = 3 * (h[1:] * delta[..., :-1] + h[:-1] * delta[..., 1:])

    diag[0] = h[1]
    upper[0] = h[0] + h[1]
    rhs[..., 0] = ((h[0] + 2 * (h[0] + h[1])) * h[1] * delta[..., 0] + h[0] ** 2 * delta[..., 1]) / (h[0] + h[1])

    diag[-1] = h[-2]
    lower[-1] = h[-2] + h[-1]
    rhs[..., -1] = ((h[-1] ** 2) * delta[..., -2] + (2 * (h[-2] + h[-1]) + h[-1]) * h[-2] * delta[..., -1]) / (
        h[-2] + h[-1])

    return _thomas(lower, diag, upper, rhs)


def fit_spline(grid):
    """Fit the not-a-knot cubic spline through ``grid``; returns one :class:`SplinePiece` per interval."""
    # Solve on a unit-spaced clock to keep the system well scaled.
    scale = float(np.mean(np.diff(grid.tau)))
    u = (grid.tau - grid.tau[0]) / scale
    h = np.diff(u)
    slopes = spline_slopes(h, grid.values)
    pieces = []
    for i in range(grid.tau.size - 1):
        hi = h[i]
        delta = (grid.values[i + 1] - grid.values[i]) / hi
        c2 = (3 * delta - 2 * slopes[i] - slopes[i + 1]) / hi
        c3 = (slopes[i] + slopes[i + 1] - 2 * delta) / hi ** 2
        pieces.append(SplinePiece(
            interval=(float(grid.tau[i]), float(grid.tau[i + 1])),
            coeffs=(complex(grid.values[i]), complex(slopes[i] / scale),
                    complex(c2 / scale ** 2), complex(c3 / scale ** 3)),
            end_slopes=(complex(slopes[i] / scale), complex(slopes[i + 1] / scale)),
        ))
    return pieces


def _query_positions(n, factor):
    """Piece index and local offset (in knot spacings) of every output sample."""
    u = np.arange(n * factor) / factor
    piece = np.minimum(np.floor(u).astype(np.int64), n - 2)
    return piece, u - piece


def lai_rows(values, factor):
    """Piece-wise linear upsampling of every row of ``values`` by ``factor``."""
    values = np.atleast_2d(np.asarray(values, dtype=np.complex128))
    n = values.shape[-1]
    if n < 2:
        raise ValueError(f"linear interpolation needs at least 2 samples, got {n}")
    piece, t = _query_positions(n, factor)
    left = values[..., piece]
    right = values[..., piece + 1]
    out = left + t * (right - left)
    out[..., ::factor] = values
    return out


def csi_rows(values, factor):
    """Not-a-knot cubic-spline upsampling of every row of ``values`` by ``factor``."""
    values = np.atleast_2d(np.asarray(values, dtype=np.complex128))
    n = values.shape[-1]
    slopes = spline_slopes(np.ones(n - 1), values)
    piece, t = _query_positions(n, factor)
    z0, z1 = values[..., piece], values[..., piece + 1]
    s0, s1 = slopes[..., piece], slopes[..., piece + 1]
    # Cubic Hermite basis on a unit interval.
    t2, t3 = t * t, t * t * t
    out = ((2 * t3 - 3 * t2 + 1) * z0 + (t3 - 2 * t2 + t) * s0
           + (-2 * t3 + 3 * t2) * z1 + (t3 - t2) * s1)
    out[..., ::factor] = values
    return out


def _check_factor(factor):
    if int(factor) != factor or factor < 1:
        raise ValueError(f"upsampling factor must be an integer >= 1, got {factor}")
    return int(factor)


def lai_upsample(sig, factor):
    """Upsample ``sig`` by ``factor`` with piece-wise linear interpolation."""
    factor = _check_factor(factor)
    if len(sig) < 2:
        raise ValueError(f"linear interpolation needs at least 2 samples, got {len(sig)}")
    return ComplexSequence(lai_rows(sig.samples, factor)[0], target_rate(factor, sig.fs))


def csi_upsample(sig, factor):
    """Upsample ``sig`` by ``factor`` with a not-a-knot cubic spline."""
    factor = _check_factor(factor)
    if len(sig) < 4:
        raise ValueError(f"cubic-spline interpolation needs at least 4 samples, got {len(sig)}")
    return ComplexSequence(csi_rows(sig.samples, factor)[0], target_rate(factor, sig.fs))


def upsample_rows(method, values, factor):
    """Dispatch to :func:`lai_rows` or :func:`csi_rows` by method tag."""
    if method == 'lai':
        return lai_rows(values, factor)
    if method == 'csi':
        return csi_rows(values, factor)
    raise ValueError(f"unknown interpolation method {method!r}; expected one of {METHODS}")
