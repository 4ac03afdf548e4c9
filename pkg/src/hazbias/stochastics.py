"""Random variates, normal and gamma quantiles, and Gaussian-copula sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from .model import BHN, Degenerate, ShiftedGamma


@dataclass(frozen=True)
class Independence:
    """Independent latent factors."""

    @property
    def rho(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Gaussian:
    """Gaussian copula with correlation ``rho`` of the underlying normals."""

    rho: float

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"copula correlation must lie in [-1, 1], got {self.rho}")


CopulaSpec = Union[Independence, Gaussian]


@dataclass(frozen=True)
class RngStream:
    """Reproducible substream ``stream_id`` of the master ``seed``."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def kendall_to_pearson(tau):
    """Correlation of a Gaussian copula with Kendall's rank correlation ``tau``."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(np.abs(tau_arr) > 1) or np.any(np.isnan(tau_arr)):
        raise ValueError("Kendall's tau must lie in [-1, 1]")
    rho = np.sin(0.5 * np.pi * tau_arr)
    # exact endpoints
    rho = np.where(np.abs(tau_arr) == 1, np.sign(tau_arr), rho)
    return float(rho) if rho.ndim == 0 else rho


def pearson_to_kendall(rho):
    return 2.0 / np.pi * np.arcsin(rho)


# -- normal distribution ---------------------------------------------------

# Acklam's rational approximation (relative error ~1.15e-9 before refinement)
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x):
    return special.ndtr(x)


def _acklam(p):
    p = np.asarray(p, dtype=float)
    x = np.empty_like(p)
    lo = p < _P_LOW
    hi = p > 1 - _P_LOW
    mid = ~(lo | hi)

    q = np.sqrt(-2 * np.log(p[lo]))
    x[lo] = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
        (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)

    q = np.sqrt(-2 * np.log1p(-p[hi]))
    x[hi] = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
        (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)

    q = p[mid] - 0.5
    r = q * q
    x[mid] = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
        ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    return x


def normal_quantile(p):
    """Standard normal quantile function.

    Rational approximation followed by one Halley step on the CDF.  The
    refinement works on the smaller tail so that precision holds for ``p``
    near 1 as well as near 0.

    Raises
    ------
    ValueError
        If any ``p`` lies outside the open interval (0, 1).
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0) & (p_arr < 1))):
        raise ValueError("normal_quantile requires 0 < p < 1")
    x = _acklam(p_arr)
    upper = p_arr > 0.5
    # residual on the smaller tail: Phi(-|x|) vs min(p, 1-p)
    tail = np.where(upper, 1.0 - p_arr, p_arr)
    xs = np.where(upper, -x, x)
    e = special.ndtr(xs) - tail
    u = e * math.sqrt(2 * math.pi) * np.exp(0.5 * xs * xs)
    xs = xs - u / (1 + 0.5 * xs * u)
    x = np.where(upper, -xs, xs)
    return float(x) if x.ndim == 0 else x


# -- gamma distribution ----------------------------------------------------


def _check_gamma(k, theta):
    if not (k > 0 and theta > 0):
        raise ValueError(f"gamma quantile requires k > 0 and theta > 0, got {k}, {theta}")


def gamma_quantile(k: float, theta: float, p):
    """Quantile of Gamma(shape ``k``, scale ``theta``) at lower probability ``p``.

    ``k == 1`` uses the exponential closed form; otherwise the inverse
    regularized incomplete gamma is polished by one Newton step.
    """
    _check_gamma(k, theta)
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0) & (p_arr < 1))):
        raise ValueError("gamma_quantile requires 0 < p < 1")
    if k == 1:
        x = -np.log1p(-p_arr)
    else:
        x = special.gammaincinv(k, p_arr)
        x = _newton_polish(k, x, special.gammainc(k, x) - p_arr)
    x = theta * x
    return float(x) if x.ndim == 0 else x


def gamma_quantile_upper(k: float, theta: float, q):
    """Quantile at upper-tail probability ``q``; accurate for tiny ``q``."""
    _check_gamma(k, theta)
    q_arr = np.asarray(q, dtype=float)
    if np.any(~((q_arr > 0) & (q_arr < 1))):
        raise ValueError("gamma_quantile_upper requires 0 < q < 1")
    if k == 1:
        x = -np.log(q_arr)
    else:
        x = special.gammainccinv(k, q_arr)
        x = _newton_polish(k, x, q_arr - special.gammaincc(k, x))
    x = theta * x
    return float(x) if x.ndim == 0 else x


def _newton_polish(k, x, resid):
    # resid = F(x) - target for the unit-scale gamma CDF
    logpdf = (k - 1) * np.log(np.where(x > 0, x, 1.0)) - x - special.gammaln(k)
    dens = np.exp(logpdf)
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.where((x > 0) & (dens > 0), resid / dens, 0.0)
    out = x - step
    return np.where(np.isfinite(out) & (out > 0), out, x)


# -- copula sampling -------------------------------------------------------


def quantile_from_normal(dist, z):
    """Map standard normal scores ``z`` through ``Phi`` and the quantile of ``dist``.

    For gamma marginals the upper half uses the upper-tail quantile so that
    large scores do not lose precision in ``1 - Phi(z)``.
    """
    z = np.asarray(z, dtype=float)
    if isinstance(dist, Degenerate):
        return np.full(z.shape, dist.c)
    if isinstance(dist, BHN):
        return dist.ppf(special.ndtr(z))
    if isinstance(dist, ShiftedGamma):
        out = np.empty_like(z)
        neg = z <= 0
        # clamp scores whose tail probability underflows
        zz = np.clip(z, -37.0, 37.0)
        out[neg] = dist.ppf(special.ndtr(zz[neg]))
        out[~neg] = dist.ppf_upper(special.ndtr(-zz[~neg]))
        return out
    raise TypeError(f"unsupported marginal {dist!r}")


def correlated_normals(rho: float, n: int, gen: np.random.Generator):
    """Pairs of standard normals with correlation ``rho``."""
    z0 = gen.standard_normal(n)
    zp = gen.standard_normal(n)
    if rho == 1:
        return z0, z0.copy()
    if rho == -1:
        return z0, -z0
    return z0, rho * z0 + math.sqrt(1.0 - rho * rho) * zp


def sample_joint(copula, frailty, modifier, n: int, rng):
    """Draw ``n`` pairs ``(u0, u1)`` with the given marginals joined by ``copula``.

    Parameters
    ----------
    copula : Independence, Gaussian or None
        Dependence between the latent factors.  ``None`` means independence.
    frailty, modifier : distribution
        Marginal laws of ``u0`` and ``u1``.
    n : int
        Number of pairs.
    rng : RngStream or numpy.random.Generator

    Returns
    -------
    u0, u1 : ndarray
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    rho = 0.0 if copula is None else copula.rho
    z0, z1 = correlated_normals(rho, n, gen)
    return quantile_from_normal(frailty, z0), quantile_from_normal(modifier, z1)
