"""Aalen's nonparametric additive hazard estimator for an intercept and a
binary treatment indicator.

At every distinct event time the least-squares increment
``(X'X)^{-1} X' dN`` is accumulated, with ``X`` the at-risk design
``[1, arm]``.  Variances use the sandwich ``(X'X)^{-1} X' diag(dN) X (X'X)^{-1}``.
Subjects censored at an event time are still at risk at that time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import closedform
from .simulator import Z95, StepCurve, TrialData

SINGULAR_TOL = 1e-12


class AalenError(ValueError):
    """Data unsuitable for the additive hazard fit."""


@dataclass
class AalenFit:
    """Cumulative regression functions of an additive hazard fit.

    ``cumulative`` and ``variance`` have one row per event time and one
    column per covariate (intercept, then treatment when both arms are
    present).
    """

    event_times: np.ndarray
    increments: np.ndarray
    cumulative: np.ndarray
    variance: np.ndarray
    covariates: tuple
    truncation_time: Optional[float] = None

    def curve(self, covariate: str = "treatment") -> StepCurve:
        """Step curve of one cumulative coefficient with 95% pointwise bounds.

        The curve starts at ``(0, 0)`` unless the first event occurs at 0.
        """
        j = self.covariates.index(covariate)
        grid, vals, var = self.event_times, self.cumulative[:, j], self.variance[:, j]
        if len(grid) == 0 or grid[0] > 0:
            grid = np.concatenate([[0.0], grid])
            vals = np.concatenate([[0.0], vals])
            var = np.concatenate([[0.0], var])
        se = np.sqrt(var)
        return StepCurve(grid, vals, lower=vals - Z95 * se, upper=vals + Z95 * se, se=se)

    def at(self, t, covariate: str = "treatment"):
        """Cumulative coefficient and its standard error at time(s) ``t``."""
        c = self.curve(covariate)
        return c(t), c.se[np.searchsorted(c.grid, np.asarray(t, dtype=float), side="right") - 1]


def _as_trial_data(data) -> TrialData:
    if isinstance(data, TrialData):
        return data
    return TrialData.from_records(data)


def fit(data) -> AalenFit:
    """Fit the additive hazard model ``beta0(t) + beta1(t) * arm``.

    Data with a single arm fall back to the intercept-only design, where the
    estimator reduces to Nelson-Aalen.  With two arms, estimation stops at the
    first event time at which the design loses full rank (one arm's risk set
    is empty); that time is reported as ``truncation_time``.

    Raises
    ------
    AalenError
        If there are no events or the arm column is not binary.
    """
    data = _as_trial_data(data)
    if len(data) == 0 or not np.any(data.status == 1):
        raise AalenError("no events in data")
    if not np.all(np.isin(data.arm, (0, 1))):
        raise AalenError("arm column must be binary (0/1)")
    if not np.all(np.isin(data.status, (0, 1))):
        raise AalenError("status column must be binary (0/1)")
    if np.any(~(data.time > 0)) or np.any(~np.isfinite(data.time)):
        raise AalenError("times must be positive and finite")

    two_arm = np.unique(data.arm).size == 2
    times = np.unique(data.time[data.status == 1])

    def risk_and_events(mask):
        t = np.sort(data.time[mask])
        at_risk = len(t) - np.searchsorted(t, times, side="left")
        ev = np.sort(data.time[mask & (data.status == 1)])
        dn = np.searchsorted(ev, times, side="right") - np.searchsorted(ev, times, side="left")
        return at_risk.astype(float), dn.astype(float)

    if not two_arm:
        y, dn = risk_and_events(np.ones(len(data), dtype=bool))
        inc = (dn / y)[:, None]
        var_inc = (dn / y**2)[:, None]
        return AalenFit(times, inc, np.cumsum(inc, axis=0), np.cumsum(var_inc, axis=0),
                        ("intercept",), None)

    y1, dn1 = risk_and_events(data.arm == 1)
    y_all, dn_all = risk_and_events(np.ones(len(data), dtype=bool))
    # X'X = [[Y, Y1], [Y1, Y1]], X'dN = [dN, dN1]
    det = y_all * y1 - y1 * y1
    scale = np.maximum(y_all * y_all, 1.0)
    singular = np.abs(det) < SINGULAR_TOL * scale
    cut = int(np.argmax(singular)) if singular.any() else len(times)
    truncation = float(times[cut]) if cut < len(times) else None
    times, y_all, y1, dn_all, dn1, det = (
        a[:cut] for a in (times, y_all, y1, dn_all, dn1, det)
    )

    # inverse of X'X
    i00 = y1 / det
    i01 = -y1 / det
    i11 = y_all / det
    b0 = i00 * dn_all + i01 * dn1
    b1 = i01 * dn_all + i11 * dn1
    # middle term X' diag(dN) X = [[dN, dN1], [dN1, dN1]]
    m00, m01, m11 = dn_all, dn1, dn1
    v00 = i00 * (m00 * i00 + m01 * i01) + i01 * (m01 * i00 + m11 * i01)
    v11 = i01 * (m00 * i01 + m01 * i11) + i11 * (m01 * i01 + m11 * i11)
    inc = np.column_stack([b0, b1])
    var_inc = np.column_stack([v00, v11])
    return AalenFit(
        times, inc, np.cumsum(inc, axis=0), np.cumsum(var_inc, axis=0),
        ("intercept", "treatment"), truncation,
    )


def fit_stratified(data, stratum_label: str = "stratum") -> dict:
    """Independent fits per stratum, keyed by stratum label in sorted order."""
    data = _as_trial_data(data)
    if data.stratum is None:
        raise AalenError(f"data carry no {stratum_label!r} column")
    labels = sorted(set(data.stratum.tolist()))
    out = {}
    for lab in labels:
        mask = data.stratum == lab
        if not mask.any():
            raise AalenError(f"stratum {lab!r} is empty")
        out[lab] = fit(data.subset(mask))
    return out


def overlay_expected_curve(fit_result: AalenFit, dist, effect=None) -> StepCurve:
    """Closed-form integrated marginal hazard difference on the fit's time grid."""
    grid = fit_result.event_times
    if len(grid) == 0 or grid[0] > 0:
        grid = np.concatenate([[0.0], grid])
    return StepCurve(grid, closedform.integrated_mchd(dist, grid, effect))


def local_slope(fit_result: AalenFit, t_start: float, t_end: float,
                covariate: str = "treatment"):
    """Average slope of a cumulative coefficient over ``[t_start, t_end]`` and its SE.

    Increments over disjoint intervals are uncorrelated, so the variance of the
    difference is the difference of the cumulative variances.
    """
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    c = fit_result.curve(covariate)
    b = c([t_start, t_end])
    v = c.se[np.searchsorted(c.grid, [t_start, t_end], side="right") - 1] ** 2
    width = t_end - t_start
    return (b[1] - b[0]) / width, np.sqrt(max(v[1] - v[0], 0.0)) / width
