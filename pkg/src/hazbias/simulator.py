"""Monte Carlo engine for potential outcomes under the structural hazard model.

Each simulated individual carries latent ``(u0, u1)`` and one uniform noise
``N_T`` shared by both worlds, so ``t0`` and ``t1`` are coupled sample by
sample and coincide when ``u1 == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .model import ScmSpec, invert_cumulative_hazard
from .stochastics import RngStream, sample_joint

MIN_AT_RISK = 30
Z95 = 1.959963984540054


class RiskSetError(ValueError):
    """Not enough subjects at risk to estimate a conditional mean."""

    def __init__(self, message, truncation_time=None):
        super().__init__(message)
        self.truncation_time = truncation_time


class PotentialOutcomeSample(NamedTuple):
    u0: float
    u1: float
    t0: float
    t1: float


@dataclass
class StepCurve:
    """A function of time stored on a strictly increasing grid."""

    grid: np.ndarray
    values: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    se: Optional[np.ndarray] = None
    at_risk: Optional[np.ndarray] = None
    truncated_at: Optional[float] = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.shape != self.values.shape:
            raise ValueError("grid and values must have equal length")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        for name in ("lower", "upper", "se", "at_risk"):
            arr = getattr(self, name)
            if arr is not None and np.shape(arr) != self.grid.shape:
                raise ValueError(f"{name} must match the grid length")

    def __len__(self):
        return len(self.grid)

    def __call__(self, t):
        """Right-continuous step evaluation."""
        idx = np.searchsorted(self.grid, np.asarray(t, dtype=float), side="right") - 1
        if np.any(idx < 0):
            raise ValueError("evaluation before the first grid point")
        return self.values[idx]


@dataclass
class PotentialOutcomes:
    """Simulated population, stored column-wise."""

    scm: ScmSpec
    u0: np.ndarray
    u1: np.ndarray
    t0: np.ndarray
    t1: np.ndarray

    def __len__(self):
        return len(self.u0)

    def __getitem__(self, i) -> PotentialOutcomeSample:
        return PotentialOutcomeSample(
            float(self.u0[i]), float(self.u1[i]), float(self.t0[i]), float(self.t1[i])
        )

    def __iter__(self) -> Iterator[PotentialOutcomeSample]:
        for i in range(len(self)):
            yield self[i]

    def times(self, world: int) -> np.ndarray:
        if world not in (0, 1):
            raise ValueError("world must be 0 or 1")
        return self.t1 if world == 1 else self.t0


def _generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


def sample_population(scm: ScmSpec, n: int, rng) -> PotentialOutcomes:
    """Draw ``n`` individuals with both potential event times."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = _generator(rng)
    u0, u1 = sample_joint(scm.dependence, scm.frailty, scm.modifier, n, gen)
    target = gen.standard_exponential(n)  # -log N_T
    t0 = invert_cumulative_hazard(scm, u0, u1, 0, target)
    t1 = invert_cumulative_hazard(scm, u0, u1, 1, target)
    return PotentialOutcomes(scm, u0, u1, t0, t1)


# -- conditional expectations among survivors ------------------------------


def _suffix_moments(times, x, grid):
    """At-risk counts and sums of ``x``, ``x**2`` over ``{times >= s}`` per grid point."""
    order = np.argsort(times, kind="stable")
    ts = times[order]
    xs = x[order]
    s1 = np.concatenate([np.cumsum(xs[::-1])[::-1], [0.0]])
    s2 = np.concatenate([np.cumsum((xs * xs)[::-1])[::-1], [0.0]])
    start = np.searchsorted(ts, grid, side="left")
    count = len(ts) - start
    return count, s1[start], s2[start]


def _truncate_index(counts, min_at_risk):
    low = np.nonzero(counts < min_at_risk)[0]
    return int(low[0]) if low.size else len(counts)


def conditional_expectation_curve(
    samples: PotentialOutcomes,
    statistic: str,
    world: int,
    grid,
    min_at_risk: int = MIN_AT_RISK,
) -> StepCurve:
    """Mean of ``statistic`` among survivors ``{t^world >= s}`` for each ``s`` in ``grid``.

    ``statistic`` is ``"modifier"`` (``u1``) or ``"baseline"`` (``f0(s, u0)``).
    The curve stops before the first grid point with fewer than
    ``min_at_risk`` survivors; ``truncated_at`` records that point.
    """
    grid = np.asarray(grid, dtype=float)
    times = samples.times(world)
    if statistic == "modifier":
        count, s1, s2 = _suffix_moments(times, samples.u1, grid)
        scale = samples.scm.effect.m(grid)
        shift = 0.0
    elif statistic == "baseline":
        bl = samples.scm.baseline
        count, s1, s2 = _suffix_moments(times, samples.u0, grid)
        scale = grid**bl.power / bl.scale_div
        shift = bl.ell
    else:
        raise ValueError(f"unknown statistic {statistic!r}")

    cut = _truncate_index(count, max(min_at_risk, 1))
    if cut == 0:
        raise RiskSetError(
            f"fewer than {min_at_risk} at risk at the first grid point", float(grid[0])
        )
    count, s1, s2, scale, g = count[:cut], s1[:cut], s2[:cut], scale[:cut], grid[:cut]
    mean = s1 / count
    var = np.maximum(s2 / count - mean**2, 0.0) * count / np.maximum(count - 1, 1)
    se = np.abs(scale) * np.sqrt(var / count)
    values = shift + scale * mean
    return StepCurve(
        g,
        values,
        lower=values - Z95 * se,
        upper=values + Z95 * se,
        se=se,
        at_risk=count.astype(float),
        truncated_at=float(grid[cut]) if cut < len(grid) else None,
    )


def _influence(times, x, s, n):
    # influence of each subject on the survivor mean of x at time s
    at_risk = times >= s
    r = at_risk.sum()
    m = x[at_risk].mean()
    return np.where(at_risk, (x - m) * n / r, 0.0), m, r


def integrated_ohd_curve(
    samples: PotentialOutcomes,
    t_max: float = 5.0,
    step: float = 0.1,
    min_at_risk: int = MIN_AT_RISK,
) -> StepCurve:
    """Integrated observed hazard difference by a left-endpoint Riemann sum.

    The integrand at ``s`` is

        E[u1 m(s) + f0(s, u0) | T1 >= s] - E[f0(s, u0) | T0 >= s],

    the hazard difference between the two worlds among their survivors.  The
    sum is evaluated at ``t = 0, step, 2 step, ...`` up to ``t_max``.
    Standard errors come from the summed influence functions of the
    survivor means, which accounts for the coupling of both worlds through
    shared latent values.
    """
    return integrated_ohd_influence(samples, t_max, step, min_at_risk)[0]


def integrated_ohd_influence(
    samples: PotentialOutcomes,
    t_max: float = 5.0,
    step: float = 0.1,
    min_at_risk: int = MIN_AT_RISK,
):
    """As :func:`integrated_ohd_curve`, also returning the influence matrix.

    Row ``j`` of the matrix holds each subject's influence on the curve value
    at grid point ``j``; the curve estimate minus its target is approximately
    the row mean.  Linear functionals of the curve (averages over the grid,
    paired differences under common random numbers) get their standard errors
    from the same matrix.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    n = len(samples)
    scm = samples.scm
    k_max = int(np.floor(t_max / step + 1e-9))
    left = np.arange(k_max) * step

    inc = np.zeros(k_max)
    psi = np.zeros(n)
    rows = [psi.copy()]
    at_risk = np.zeros(k_max + 1)
    at_risk[0] = n
    cut = k_max
    for k, s in enumerate(left):
        r1 = np.count_nonzero(samples.t1 >= s)
        r0 = np.count_nonzero(samples.t0 >= s)
        if min(r1, r0) < max(min_at_risk, 1):
            cut = k
            break
        f0 = scm.baseline(s, samples.u0)
        x1 = samples.u1 * scm.effect.m(s) + f0
        psi1, m1, _ = _influence(samples.t1, x1, s, n)
        psi0, m0, _ = _influence(samples.t0, f0, s, n)
        inc[k] = step * (m1 - m0)
        psi = psi + step * (psi1 - psi0)
        rows.append(psi)
        at_risk[k + 1] = min(r1, r0)

    if cut == 0:
        raise RiskSetError(f"fewer than {min_at_risk} at risk at t=0", 0.0)
    influence = np.array(rows)
    grid = np.arange(cut + 1) * step
    values = np.concatenate([[0.0], np.cumsum(inc[:cut])])
    se = influence.std(axis=1, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(cut + 1)
    curve = StepCurve(
        grid,
        values,
        lower=values - Z95 * se,
        upper=values + Z95 * se,
        se=se,
        at_risk=at_risk[: cut + 1],
        truncated_at=float(left[cut]) if cut < k_max else None,
    )
    return curve, influence


def survival_curves(samples: PotentialOutcomes, grid):
    """Empirical survivor fractions ``P(t^a >= s)``; returns ``(S1, S0)``."""
    grid = np.asarray(grid, dtype=float)
    n = len(samples)
    out = []
    for world in (1, 0):
        ts = np.sort(samples.times(world))
        surv = (n - np.searchsorted(ts, grid, side="left")) / n
        se = np.sqrt(surv * (1 - surv) / n)
        out.append(
            StepCurve(grid, surv, lower=np.clip(surv - Z95 * se, 0, 1),
                      upper=np.clip(surv + Z95 * se, 0, 1), se=se)
        )
    return out[0], out[1]


# -- randomized trials ------------------------------------------------------


class TrialRecord(NamedTuple):
    id: str
    time: float
    status: int
    arm: int
    stratum: Optional[str] = None


@dataclass(frozen=True)
class Censoring:
    """Independent right censoring: administrative cut-off and/or exponential dropout."""

    admin_time: Optional[float] = None
    rate: Optional[float] = None

    def __post_init__(self):
        if self.admin_time is not None and not self.admin_time > 0:
            raise ValueError("admin_time must be positive")
        if self.rate is not None and not self.rate > 0:
            raise ValueError("censoring rate must be positive")


@dataclass
class TrialData:
    """Right-censored two-arm data, stored column-wise."""

    id: np.ndarray
    time: np.ndarray
    status: np.ndarray
    arm: np.ndarray
    stratum: Optional[np.ndarray] = None

    def __post_init__(self):
        self.id = np.asarray(self.id).astype(str)
        self.time = np.asarray(self.time, dtype=float)
        self.status = np.asarray(self.status, dtype=int)
        self.arm = np.asarray(self.arm, dtype=int)
        if self.stratum is not None:
            self.stratum = np.asarray(self.stratum).astype(str)
        n = len(self.time)
        for name in ("id", "status", "arm"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name!r} has the wrong length")
        if self.stratum is not None and len(self.stratum) != n:
            raise ValueError("column 'stratum' has the wrong length")

    def __len__(self):
        return len(self.time)

    def records(self) -> Iterator[TrialRecord]:
        for i in range(len(self)):
            yield TrialRecord(
                str(self.id[i]),
                float(self.time[i]),
                int(self.status[i]),
                int(self.arm[i]),
                None if self.stratum is None else str(self.stratum[i]),
            )

    @classmethod
    def from_records(cls, records) -> "TrialData":
        records = list(records)
        strata = [r.stratum for r in records]
        has_strata = any(s is not None for s in strata)
        return cls(
            [r.id for r in records],
            [r.time for r in records],
            [r.status for r in records],
            [r.arm for r in records],
            ["" if s is None else s for s in strata] if has_strata else None,
        )

    def subset(self, mask) -> "TrialData":
        return TrialData(
            self.id[mask], self.time[mask], self.status[mask], self.arm[mask],
            None if self.stratum is None else self.stratum[mask],
        )

    @classmethod
    def concat(cls, parts) -> "TrialData":
        parts = list(parts)
        has = [p.stratum is not None for p in parts]
        if any(has) and not all(has):
            raise ValueError("cannot mix stratified and unstratified data")
        return cls(
            np.concatenate([p.id for p in parts]),
            np.concatenate([p.time for p in parts]),
            np.concatenate([p.status for p in parts]),
            np.concatenate([p.arm for p in parts]),
            np.concatenate([p.stratum for p in parts]) if all(has) else None,
        )


def simulate_rct(
    scm: ScmSpec,
    n: int,
    treat_prob: float = 0.5,
    censoring: Optional[Censoring] = None,
    rng=None,
    stratum: Optional[str] = None,
    id_prefix: str = "",
) -> TrialData:
    """Simulate a randomized trial with independent censoring.

    Arms are Bernoulli(``treat_prob``) draws independent of all latent
    variables; each subject's factual time is its potential time under the
    assigned arm.
    """
    if not 0 < treat_prob < 1:
        raise ValueError("treat_prob must lie strictly between 0 and 1")
    gen = _generator(rng if rng is not None else RngStream(0))
    pop = sample_population(scm, n, gen)
    return randomize(pop, treat_prob, censoring, gen, stratum=stratum, id_prefix=id_prefix)


def randomize(
    pop: PotentialOutcomes,
    treat_prob: float,
    censoring: Optional[Censoring],
    rng,
    stratum: Optional[str] = None,
    id_prefix: str = "",
) -> TrialData:
    """Assign arms and censoring to an already simulated population."""
    if not 0 < treat_prob < 1:
        raise ValueError("treat_prob must lie strictly between 0 and 1")
    gen = _generator(rng)
    n = len(pop)
    arm = (gen.random(n) < treat_prob).astype(int)
    event = np.where(arm == 1, pop.t1, pop.t0)
    cens = np.full(n, np.inf)
    if censoring is not None:
        if censoring.rate is not None:
            cens = gen.exponential(1.0 / censoring.rate, n)
        if censoring.admin_time is not None:
            cens = np.minimum(cens, censoring.admin_time)
    if np.any(~np.isfinite(event) & ~np.isfinite(cens)):
        raise ValueError("infinite event times need a censoring mechanism")
    time = np.minimum(event, cens)
    status = (event <= cens).astype(int)
    ids = [f"{id_prefix}{i + 1}" for i in range(n)]
    return TrialData(ids, time, status, arm, None if stratum is None else [stratum] * n)


def binned_hazard_difference(data: TrialData, edges):
    """Occurrence/exposure hazard rates per arm on bins ``[edges[j], edges[j+1])``.

    Returns a dict with bin midpoints, the rate difference (arm 1 minus arm
    0), its Poisson standard error and the per-arm rates.
    """
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    rates, var = {}, {}
    for a in (0, 1):
        sel = data.arm == a
        t = data.time[sel]
        d = data.status[sel] == 1
        # exposure of each subject inside each bin
        expo = np.clip(t[:, None], lo, hi) - lo
        events = ((t[:, None] >= lo) & (t[:, None] < hi) & d[:, None]).sum(axis=0)
        exposure = expo.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            rates[a] = events / exposure
            var[a] = events / exposure**2
    return {
        "mid": 0.5 * (lo + hi),
        "difference": rates[1] - rates[0],
        "se": np.sqrt(var[1] + var[0]),
        "rate1": rates[1],
        "rate0": rates[0],
    }
