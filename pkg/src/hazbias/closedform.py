"""Closed-form survivor-conditional modifier means via the Laplace transform.

With a constant individual effect ``u1``, survival to ``t`` in the exposed
world tilts the modifier law by ``exp(-t * u1)``, so that

    E[U1 | T1 >= t] = -L'(t) / L(t),      L(c) = E[exp(-c U1)],

and the integrated marginal hazard difference is ``B(t) = -log L(t)``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .model import BHN, Degenerate, EffectSpec, ShiftedGamma


class DomainError(ValueError):
    """Argument outside the domain of the Laplace transform."""


class UnsupportedProfileError(ValueError):
    """Closed forms need the constant effect profile."""


class LaplacePair(NamedTuple):
    value: float
    derivative: float


def _check_domain(dist, c):
    c = np.asarray(c, dtype=float)
    if np.any(np.isnan(c)):
        raise DomainError("transform argument is NaN")
    if isinstance(dist, ShiftedGamma) and np.any(c <= -1.0 / dist.theta):
        raise DomainError(f"gamma Laplace transform needs c > {-1.0 / dist.theta:g}")
    return c


def _bhn_log_weights(dist: BHN, c):
    # log of the three tilted masses p_j * exp(-c * v_j), shape (..., 3)
    vals, probs = dist.atoms()
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    return logp - np.multiply.outer(c, vals), vals


def _bhn_excess(dist: BHN, c):
    # L(c) - 1 = p1 (e^{-c mu1} - 1) + p2 (e^{-c mu2} - 1); exact zero at c = 0
    with np.errstate(over="ignore"):
        return dist.p1 * np.expm1(-c * dist.mu1) + dist.p2 * np.expm1(-c * dist.mu2)


def log_laplace(dist, c):
    """``log L(c)``, evaluated stably."""
    c = _check_domain(dist, c)
    if isinstance(dist, Degenerate):
        out = -c * dist.c
    elif isinstance(dist, BHN):
        s = _bhn_excess(dist, c)
        lw, _ = _bhn_log_weights(dist, c)
        # log1p near the origin, log-sum-exp once the tilted masses drift apart
        near = np.isfinite(s) & (np.abs(s) < 0.5)
        out = np.where(near, np.log1p(np.where(near, s, 0.0)), logsumexp(lw, axis=-1))
    elif isinstance(dist, ShiftedGamma):
        out = c * dist.ell_shift - dist.k * np.log1p(dist.theta * c)
    else:
        raise TypeError(f"unsupported distribution {dist!r}")
    return float(out) if np.ndim(out) == 0 else out


def laplace(dist, c) -> LaplacePair:
    """Laplace transform ``E[exp(-c U)]`` and its derivative in ``c``."""
    c = _check_domain(dist, c)
    if isinstance(dist, Degenerate):
        val = np.exp(-c * dist.c)
        der = -dist.c * val
    elif isinstance(dist, BHN):
        vals, probs = dist.atoms()
        terms = probs * np.exp(-np.multiply.outer(c, vals))
        val = 1.0 + _bhn_excess(dist, c)
        der = -(terms * vals).sum(axis=-1)
    elif isinstance(dist, ShiftedGamma):
        k, th, sh = dist.k, dist.theta, dist.ell_shift
        val = np.exp(c * sh) * (1.0 + th * c) ** (-k)
        der = val * (sh - k * th / (1.0 + th * c))
    else:
        raise TypeError(f"unsupported distribution {dist!r}")
    if np.ndim(val) == 0:
        return LaplacePair(float(val), float(der))
    return LaplacePair(val, der)


def conditional_mean_modifier(dist, F1):
    """``E[U1 | T1 >= t]`` where ``F1`` is the integrated effect profile at ``t``."""
    F1 = _check_domain(dist, F1)
    if isinstance(dist, Degenerate):
        out = np.full(F1.shape, dist.c)
    elif isinstance(dist, BHN):
        lw, vals = _bhn_log_weights(dist, F1)
        w = np.exp(lw - logsumexp(lw, axis=-1, keepdims=True))
        out = (w * vals).sum(axis=-1)
    elif isinstance(dist, ShiftedGamma):
        out = dist.theta * dist.k / (dist.theta * F1 + 1.0) - dist.ell_shift
    else:
        raise TypeError(f"unsupported distribution {dist!r}")
    return float(out) if np.ndim(out) == 0 else out


def _require_constant(effect):
    if effect is not None and effect.profile != "constant":
        raise UnsupportedProfileError("closed forms require the constant effect profile")


def chd(dist, t, effect: EffectSpec | None = None):
    """Causal hazard difference ``m(t) * E[U1]``."""
    _require_constant(effect)
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, dist.mean())
    return float(out) if out.ndim == 0 else out


def integrated_mchd(dist, t, effect: EffectSpec | None = None):
    """``B(t) = int_0^t E[U1 | T1 >= s] ds = -log L(t)``.

    BHN: ``-log(p1 (e^{-t mu1} - 1) + p2 (e^{-t mu2} - 1) + 1)``;
    shifted gamma: ``k log(theta t + 1) - ell t``; degenerate ``c``: ``c t``.
    """
    _require_constant(effect)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("integrated_mchd requires t >= 0")
    if isinstance(dist, ShiftedGamma):
        out = dist.k * np.log1p(dist.theta * t) - dist.ell_shift * t
    elif isinstance(dist, Degenerate):
        out = dist.c * t
    else:
        out = -np.asarray(log_laplace(dist, t))
    # + 0.0 clears the sign of -0.0 at t = 0
    out = np.asarray(out, dtype=float) + 0.0
    return float(out) if out.ndim == 0 else out


def bias_curve(dist, t, effect: EffectSpec | None = None):
    """Pointwise ``CHD - MCHD``."""
    _require_constant(effect)
    t = np.asarray(t, dtype=float)
    out = np.asarray(chd(dist, t) - conditional_mean_modifier(dist, t))
    return float(out) if out.ndim == 0 else out


def reference_line(dist, t):
    """``g(t) = t * E[U1]``, the integrated hazard difference without selection."""
    t = np.asarray(t, dtype=float)
    out = t * dist.mean()
    return float(out) if out.ndim == 0 else out
