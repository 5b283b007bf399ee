"""
Lattice Green function of the shifted two-body symbol.

    G(r, g) = (2 pi)^-3 int_T3 dq / (sum_j r_j (1 - cos q_j) + g)

is evaluated through its Laplace representation

    G(r, g) = int_0^inf exp(-t g) prod_j exp(-r_j t) I_0(r_j t) dt,

which turns the singular three-dimensional integral into a smooth
one-dimensional one. The half line is split at T = c / max(min r, g);
the tail is mapped to (0, 1] by t = T / u^2, where the integrand tends to a
finite limit. The tail integrand is assembled in log space, so a vanishing
exponential never meets the diverging Jacobian 2T / u^3.
"""

from __future__ import annotations

import numpy as np
import numpy.typing as npt
from scipy import integrate, special

from efimov_kit.errors import ConvergenceError

_SPLIT = 50.0
# exp(-x) I_0(x) by its asymptotic series beyond this argument
_ASYMPTOTIC = 1e12
_U_FLOOR = 1e-150


def _bessel_product(r: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.prod(special.ive(0, r * t[:, None]), axis=-1)


def _log_bessel_product(r: np.ndarray, log_t: np.ndarray) -> np.ndarray:
    """sum_j log(exp(-r_j t) I_0(r_j t)), finite for every t including overflow."""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        log_x = np.log(r) + log_t[:, None]
        x = np.exp(log_x)
        small = x < _ASYMPTOTIC
        exact = np.log(special.ive(0, np.where(small, x, 0.0)))
        asymptotic = -0.5 * (np.log(2.0 * np.pi) + log_x) + np.log1p(0.125 / x)
    terms = np.where(small, exact, asymptotic)
    return np.where(r == 0.0, 0.0, terms).sum(axis=-1)


def lattice_green(
    r: npt.ArrayLike,
    gap: npt.ArrayLike,
    epsabs: float = 1e-13,
    epsrel: float = 1e-11,
):
    """
    Evaluate G(r, g) for amplitudes ``r`` (shape (..., 3)) and gaps ``gap``.

    Args:
        r: Non-negative amplitudes; the trailing axis holds the three components.
        gap: Non-negative energy gap(s) below the band bottom, broadcast
            against ``r.shape[:-1]``.
        epsabs: Absolute tolerance of the adaptive integration.
        epsrel: Relative tolerance of the adaptive integration.

    Returns:
        A float for a single point, otherwise an array of shape ``r.shape[:-1]``.
        Points with zero gap and a vanishing amplitude diverge and return inf.

    Raises:
        ValueError: If an amplitude or gap is negative.
        ConvergenceError: If the integration produced a non-finite value.
    """
    r = np.asarray(r, dtype=float)
    shape = r.shape[:-1]
    gap = np.broadcast_to(np.asarray(gap, dtype=float), shape)
    r = r.reshape(-1, 3)
    g = gap.reshape(-1).copy()

    if np.any(r < 0) or np.any(g < 0):
        raise ValueError("Amplitudes and gaps must be non-negative")

    out = np.full(g.shape, np.inf)
    finite = ~((g == 0) & (r.min(axis=1) == 0))
    if np.any(finite):
        rf = r[finite]
        gf = g[finite]
        T = _SPLIT / np.maximum(rf.min(axis=1), gf)
        log_2T = np.log(2.0 * T)

        def head(x):
            t = T * x
            return T * np.exp(-gf * t) * _bessel_product(rf, t)

        def tail(u):
            log_u = np.log(max(u, _U_FLOOR))
            log_t = np.log(T) - 2.0 * log_u
            with np.errstate(over="ignore", invalid="ignore"):
                decay = np.where(gf > 0.0, gf * np.exp(log_t), 0.0)
            return np.exp(log_2T - 3.0 * log_u - decay + _log_bessel_product(rf, log_t))

        near, _ = integrate.quad_vec(head, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel, norm="max")
        far, _ = integrate.quad_vec(tail, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel, norm="max")
        values = np.asarray(near) + np.asarray(far)
        if not np.all(np.isfinite(values)):
            bad = np.flatnonzero(~np.isfinite(values))[0]
            raise ConvergenceError(
                f"Lattice Green function not finite at r={rf[bad].tolist()}, gap={gf[bad]:.3e}"
            )
        out[finite] = values

    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out
