"""Structural hazard model: baseline and effect families, distributions of the
latent factors, individual hazards and their cumulative integrals.

The individual hazard under exposure level ``a`` is

    lambda(t) = f0(t, u0) + a * u1 * m(t),    f0(t, u0) = ell + u0 * t**q / d

with ``m(t) = 1`` (constant individual effect).  Event times are obtained by
inverting the cumulative hazard at an exponential target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special


class ModelError(ValueError):
    """Invalid model specification."""


class NegativeHazardError(ModelError):
    """The hazard evaluated below zero for the supplied latent values."""


# tolerance for positivity checks on floating-point inputs
_POSITIVITY_SLACK = 1e-12

INVERSION_TOL = 1e-10
INVERSION_MAXITER = 200


@dataclass(frozen=True)
class BaselineSpec:
    """Baseline hazard ``ell + u0 * t**power / scale_div``."""

    ell: float = 0.0
    power: float = 2.0
    scale_div: float = 1.0

    def __post_init__(self):
        if not (self.ell >= 0 and math.isfinite(self.ell)):
            raise ModelError(f"baseline ell must be finite and >= 0, got {self.ell}")
        if not (self.power >= 0 and math.isfinite(self.power)):
            raise ModelError(f"baseline power must be finite and >= 0, got {self.power}")
        if not (self.scale_div > 0 and math.isfinite(self.scale_div)):
            raise ModelError(f"baseline scale_div must be > 0, got {self.scale_div}")

    def __call__(self, t, u0):
        t = np.asarray(t, dtype=float)
        return self.ell + np.asarray(u0, dtype=float) * t**self.power / self.scale_div

    def integral(self, t, u0):
        """Closed-form integral of the baseline over ``[0, t]``."""
        t = np.asarray(t, dtype=float)
        p = self.power + 1.0
        return self.ell * t + np.asarray(u0, dtype=float) * t**p / (p * self.scale_div)

    def floor(self, u0_min: float) -> float:
        """Infimum of the baseline over ``t >= 0`` and ``u0 >= u0_min``."""
        if self.power == 0:
            return self.ell + u0_min / self.scale_div
        # t**q vanishes at t=0 for q > 0
        return self.ell + min(u0_min, 0.0)


@dataclass(frozen=True)
class EffectSpec:
    """Separable effect ``a * u1 * m(t)``; only the constant profile exists."""

    profile: str = "constant"

    def __post_init__(self):
        if self.profile != "constant":
            raise ModelError(f"unsupported effect profile {self.profile!r}")

    def m(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def integral(self, t):
        """``F1(t) = int_0^t m(s) ds``."""
        return np.asarray(t, dtype=float) * 1.0


# -- distributions of the latent factors -----------------------------------


@dataclass(frozen=True)
class BHN:
    """Benefit-harm-neutral three-point law.

    Mass ``p1`` at ``mu1 <= 0``, ``p2`` at ``mu2 >= 0`` and the remainder at 0.
    """

    p1: float
    mu1: float
    p2: float
    mu2: float

    def __post_init__(self):
        if not (0 <= self.p1 <= 1 and 0 <= self.p2 <= 1):
            raise ModelError("BHN probabilities must lie in [0, 1]")
        if self.p1 + self.p2 > 1 + 1e-15:
            raise ModelError(f"BHN requires p1 + p2 <= 1, got {self.p1 + self.p2}")
        if not self.mu1 <= 0 <= self.mu2:
            raise ModelError(f"BHN requires mu1 <= 0 <= mu2, got {self.mu1}, {self.mu2}")

    @property
    def p0(self) -> float:
        return max(0.0, 1.0 - self.p1 - self.p2)

    def atoms(self):
        """Support points in ascending order with their masses."""
        return (
            np.array([self.mu1, 0.0, self.mu2]),
            np.array([self.p1, self.p0, self.p2]),
        )

    def mean(self) -> float:
        return self.p1 * self.mu1 + self.p2 * self.mu2

    def support_min(self) -> float:
        return self.mu1 if self.p1 > 0 else 0.0 if self.p0 > 0 else self.mu2

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        vals, probs = self.atoms()
        return sum(p * (x >= v) for v, p in zip(vals, probs))

    def ppf(self, p):
        """Generalized inverse ``inf{x : F(x) >= p}``."""
        p = np.asarray(p, dtype=float)
        vals, probs = self.atoms()
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, p, side="left")
        return vals[np.minimum(idx, 2)]

    def describe(self) -> str:
        return f"BHN({self.p1:g},{self.mu1:g},{self.p2:g},{self.mu2:g})"


@dataclass(frozen=True)
class ShiftedGamma:
    """``U + ell_shift ~ Gamma(k, theta)`` in the shape/scale parameterization."""

    k: float
    theta: float
    ell_shift: float = 0.0

    def __post_init__(self):
        if not (self.k > 0 and self.theta > 0):
            raise ModelError(f"gamma requires k > 0 and theta > 0, got {self.k}, {self.theta}")
        if not math.isfinite(self.ell_shift):
            raise ModelError("gamma shift must be finite")

    def mean(self) -> float:
        return self.k * self.theta - self.ell_shift

    def support_min(self) -> float:
        return -self.ell_shift

    def cdf(self, x):
        z = np.maximum(np.asarray(x, dtype=float) + self.ell_shift, 0.0)
        return special.gammainc(self.k, z / self.theta)

    def ppf(self, p):
        from .stochastics import gamma_quantile

        return gamma_quantile(self.k, self.theta, p) - self.ell_shift

    def ppf_upper(self, q):
        """Quantile at upper-tail probability ``q = 1 - p``."""
        from .stochastics import gamma_quantile_upper

        return gamma_quantile_upper(self.k, self.theta, q) - self.ell_shift

    def describe(self) -> str:
        return f"Gamma({self.k:g},{self.theta:g})-{self.ell_shift:g}"


@dataclass(frozen=True)
class Degenerate:
    """Point mass at ``c``."""

    c: float

    def __post_init__(self):
        if not math.isfinite(self.c):
            raise ModelError("degenerate value must be finite")

    def mean(self) -> float:
        return self.c

    def support_min(self) -> float:
        return self.c

    def cdf(self, x):
        return (np.asarray(x, dtype=float) >= self.c).astype(float)

    def ppf(self, p):
        return np.full(np.shape(p), self.c, dtype=float)

    def describe(self) -> str:
        return f"Degenerate({self.c:g})"


ModifierDistribution = Union[BHN, ShiftedGamma, Degenerate]


def GammaFrailty(k: float, theta: float) -> ShiftedGamma:
    """Gamma frailty; a :class:`ShiftedGamma` without shift."""
    return ShiftedGamma(k, theta, 0.0)


@dataclass(frozen=True)
class ScmSpec:
    """Full parameterization of the structural hazard model."""

    baseline: BaselineSpec = field(default_factory=BaselineSpec)
    modifier: ModifierDistribution = field(default_factory=lambda: Degenerate(0.0))
    frailty: Union[ShiftedGamma, Degenerate] = field(default_factory=lambda: Degenerate(0.0))
    effect: EffectSpec = field(default_factory=EffectSpec)
    # a stochastics.CopulaSpec; None means independence
    dependence: object = None

    def __post_init__(self):
        validate(self)


def validate(spec: ScmSpec) -> None:
    """Reject specifications whose hazard can become negative.

    The check requires ``inf f0 + inf U1 >= 0``: the most beneficial modifier
    value must not push the lowest reachable baseline below zero.
    """
    fr = spec.frailty
    if isinstance(fr, BHN):
        raise ModelError("frailty must be Gamma or Degenerate")
    if isinstance(fr, ShiftedGamma) and fr.ell_shift != 0:
        raise ModelError("frailty Gamma must not be shifted")
    u0_min = fr.support_min()
    if u0_min < 0:
        raise ModelError(f"frailty support must be nonnegative, got minimum {u0_min}")
    floor = spec.baseline.floor(u0_min)
    worst = floor + min(spec.modifier.support_min(), 0.0)
    if worst < -_POSITIVITY_SLACK:
        raise ModelError(
            f"hazard can become negative: baseline floor {floor:g} plus "
            f"modifier minimum {spec.modifier.support_min():g} is {worst:g}"
        )


def hazard(spec: ScmSpec, u0, u1, a, t):
    """Individual hazard ``f0(t, u0) + a * u1 * m(t)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("hazard requires t >= 0")
    val = spec.baseline(t, u0) + a * np.asarray(u1, dtype=float) * spec.effect.m(t)
    if np.any(val < -_POSITIVITY_SLACK):
        raise NegativeHazardError("latent values escape the validated support")
    return val[()] if isinstance(val, np.ndarray) else val


def cumulative_hazard(spec: ScmSpec, u0, u1, a, t):
    """Closed-form ``int_0^t hazard(s) ds``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("cumulative_hazard requires t >= 0")
    val = spec.baseline.integral(t, u0) + a * np.asarray(u1, dtype=float) * spec.effect.integral(t)
    return val[()] if isinstance(val, np.ndarray) else val


def invert_cumulative_hazard(spec: ScmSpec, u0, u1, a, target):
    """Smallest ``t`` with cumulative hazard equal to ``target``.

    Vectorized over all arguments.  Returns ``inf`` where the hazard is
    identically zero and ``target > 0``.

    The cumulative hazard is ``c1 * t + c2 * t**p`` with ``c1, c2 >= 0`` and
    ``p >= 1``, so it is convex and increasing.  Newton's method started to the
    right of the root decreases monotonically onto it; a bisection step guards
    against a vanishing derivative.
    """
    u0, u1, a, target = np.broadcast_arrays(
        np.asarray(u0, dtype=float),
        np.asarray(u1, dtype=float),
        np.asarray(a, dtype=float),
        np.asarray(target, dtype=float),
    )
    if np.any(target < 0):
        raise ValueError("target must be >= 0")
    bl = spec.baseline
    p = bl.power + 1.0
    c1 = bl.ell + a * u1
    c2 = u0 / (p * bl.scale_div)
    if np.any(c1 < -_POSITIVITY_SLACK) or np.any(c2 < 0):
        raise NegativeHazardError("latent values escape the validated support")
    c1 = np.maximum(c1, 0.0)

    if p == 1.0:
        rate = c1 + c2
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(rate > 0, target / rate, np.inf)
        out = np.where(target == 0, 0.0, out)
        return out[()] if out.ndim == 0 else out

    with np.errstate(divide="ignore", invalid="ignore"):
        ub1 = np.where(c1 > 0, target / c1, np.inf)
        ub2 = np.where(c2 > 0, (target / c2) ** (1.0 / p), np.inf)
    t = np.minimum(ub1, ub2)
    dead = ~np.isfinite(t)
    t = np.where(dead, 0.0, t)
    lo = np.zeros_like(t)
    hi = t.copy()

    def lam(x):
        return c1 * x + c2 * x**p

    active = (~dead) & (target > 0)
    for _ in range(INVERSION_MAXITER):
        if not active.any():
            break
        f = lam(t) - target
        hi = np.where(active & (f >= 0), np.minimum(hi, t), hi)
        lo = np.where(active & (f < 0), np.maximum(lo, t), lo)
        done = np.abs(f) <= INVERSION_TOL
        active &= ~done
        deriv = c1 + p * c2 * t ** (p - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(deriv > 0, f / deriv, np.nan)
        cand = t - step
        bad = ~np.isfinite(cand) | (cand < lo) | (cand > hi)
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        t = np.where(active, cand, t)

    t = np.where(target == 0, 0.0, t)
    t = np.where(dead & (target > 0), np.inf, t)
    return t[()] if t.ndim == 0 else t
