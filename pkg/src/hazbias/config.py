"""Scenario configuration files (INI syntax).

Example::

    [baseline]
    ell = 0
    power = 2
    scale_div = 1

    [modifier]
    family = gamma
    k = 1
    theta = 1
    shift = 0

    [frailty]
    family = gamma
    k = 1
    theta = 1

    [copula]
    kind = gaussian
    tau = -1, -0.5, 0, 0.5, 1

    [simulation]
    n = 10000
    seed = 2022
    grid_end = 5
    grid_step = 0.1

    [output]
    path = copula_ell0.csv

Several modifiers can be listed as ``[modifier <label>]`` sections; each
becomes one series of ``curves-closed``.
"""

from __future__ import annotations

import configparser
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .model import (
    BHN,
    BaselineSpec,
    Degenerate,
    ModelError,
    ScmSpec,
    ShiftedGamma,
)
from .simulator import Censoring
from .stochastics import Gaussian, Independence, kendall_to_pearson

SEED_ENV = "HAZBIAS_SEED"


class ConfigError(ValueError):
    """Invalid scenario configuration."""


_KEYS = {
    "baseline": {"ell", "power", "scale_div"},
    "modifier": {"family", "p1", "mu1", "p2", "mu2", "k", "theta", "shift", "c"},
    "frailty": {"family", "k", "theta", "c"},
    "copula": {"kind", "tau", "rho"},
    "simulation": {
        "n", "seed", "grid_start", "grid_end", "grid_step", "min_at_risk",
        "treat_prob", "admin_time", "censor_rate",
    },
    "output": {"path"},
}

_FAMILY_KEYS = {
    "bhn": {"p1", "mu1", "p2", "mu2"},
    "gamma": {"k", "theta", "shift"},
    "degenerate": {"c"},
}


@dataclass
class ScenarioConfig:
    baseline: BaselineSpec
    modifiers: list  # [(label, distribution)]
    frailty: object
    copula_kind: str
    rhos: list  # [(label, rho)]
    n: int = 10000
    seed: Optional[int] = None
    grid_start: float = 0.0
    grid_end: float = 5.0
    grid_step: float = 0.1
    min_at_risk: int = 30
    treat_prob: float = 0.5
    censoring: Optional[Censoring] = None
    output: Optional[str] = None
    source: Optional[str] = None
    sections: set = field(default_factory=set)

    @property
    def modifier(self):
        if len(self.modifiers) != 1:
            raise ConfigError(f"expected exactly one [modifier] section, got {len(self.modifiers)}")
        return self.modifiers[0][1]

    def copula(self, rho: float):
        return Independence() if self.copula_kind == "independence" else Gaussian(rho)

    def scm(self, rho: Optional[float] = None) -> ScmSpec:
        if rho is None:
            if len(self.rhos) != 1:
                raise ConfigError("scenario lists several correlations; pick one")
            rho = self.rhos[0][1]
        try:
            return ScmSpec(self.baseline, self.modifier, self.frailty, dependence=self.copula(rho))
        except ModelError as exc:
            raise ConfigError(str(exc)) from None

    def resolve_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        env = os.environ.get(SEED_ENV)
        if env is not None:
            try:
                return int(env)
            except ValueError:
                raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
        return 0


class _Locator:
    """Line numbers of sections and keys, for diagnostics."""

    def __init__(self, text: str):
        self.lines = {}
        section = None
        for i, line in enumerate(text.splitlines(), start=1):
            s = line.strip()
            m = re.match(r"\[(.+)\]$", s)
            if m:
                section = m.group(1).strip()
                self.lines[(section, None)] = i
            elif section and "=" in s and not s.startswith(("#", ";")):
                self.lines[(section, s.split("=", 1)[0].strip().lower())] = i

    def where(self, section, key=None):
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        loc = f"[{section}]" + (f" {key}" if key else "")
        return f"line {line}: {loc}" if line else loc


def _number(loc, section, key, raw, kind=float):
    try:
        val = kind(raw)
    except ValueError:
        raise ConfigError(f"{loc.where(section, key)}: {raw!r} is not a valid {kind.__name__}") from None
    if kind is float and not math.isfinite(val):
        raise ConfigError(f"{loc.where(section, key)}: value must be finite")
    return val


def _numbers(loc, section, key, raw):
    parts = [p for p in re.split(r"[,\s]+", raw.strip()) if p]
    if not parts:
        raise ConfigError(f"{loc.where(section, key)}: empty list")
    return [_number(loc, section, key, p) for p in parts]


def _distribution(loc, name, sec, allowed_families):
    fam = sec.get("family")
    if fam is None:
        raise ConfigError(f"{loc.where(name)}: missing 'family'")
    fam = fam.strip().lower()
    if fam not in allowed_families:
        raise ConfigError(f"{loc.where(name, 'family')}: unknown family {fam!r}")
    extra = set(sec) - {"family"} - _FAMILY_KEYS[fam]
    if extra:
        key = sorted(extra)[0]
        raise ConfigError(f"{loc.where(name, key)}: key not valid for family {fam!r}")
    vals = {k: _number(loc, name, k, v) for k, v in sec.items() if k != "family"}
    try:
        if fam == "bhn":
            missing = _FAMILY_KEYS["bhn"] - set(vals)
            if missing:
                raise ConfigError(f"{loc.where(name)}: missing {sorted(missing)}")
            return BHN(vals["p1"], vals["mu1"], vals["p2"], vals["mu2"])
        if fam == "gamma":
            if not {"k", "theta"} <= set(vals):
                raise ConfigError(f"{loc.where(name)}: gamma needs k and theta")
            return ShiftedGamma(vals["k"], vals["theta"], vals.get("shift", 0.0))
        if "c" not in vals:
            raise ConfigError(f"{loc.where(name)}: degenerate needs c")
        return Degenerate(vals["c"])
    except ModelError as exc:
        raise ConfigError(f"{loc.where(name)}: {exc}") from None


def parse_config(text: str, source: Optional[str] = None) -> ScenarioConfig:
    """Parse and validate a scenario; unknown sections or keys are rejected."""
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from None
    loc = _Locator(text)

    modifiers = []
    for name in cp.sections():
        base = name.split(None, 1)[0]
        if base not in _KEYS or (base != "modifier" and name != base):
            raise ConfigError(f"{loc.where(name)}: unknown section")
        unknown = set(cp[name]) - _KEYS[base]
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"{loc.where(name, key)}: unknown key")
        if base == "modifier":
            dist = _distribution(loc, name, cp[name], ("bhn", "gamma", "degenerate"))
            label = name.split(None, 1)[1].strip() if " " in name else dist.describe()
            modifiers.append((label, dist))

    b = cp["baseline"] if cp.has_section("baseline") else {}
    try:
        baseline = BaselineSpec(
            _number(loc, "baseline", "ell", b.get("ell", "0")),
            _number(loc, "baseline", "power", b.get("power", "2")),
            _number(loc, "baseline", "scale_div", b.get("scale_div", "1")),
        )
    except ModelError as exc:
        raise ConfigError(f"{loc.where('baseline')}: {exc}") from None

    if cp.has_section("frailty"):
        frailty = _distribution(loc, "frailty", cp["frailty"], ("gamma", "degenerate"))
        if isinstance(frailty, ShiftedGamma) and frailty.ell_shift != 0:
            raise ConfigError(f"{loc.where('frailty', 'shift')}: frailty cannot be shifted")
    else:
        frailty = Degenerate(0.0)

    kind = "independence"
    rhos = [("rho=0", 0.0)]
    if cp.has_section("copula"):
        c = cp["copula"]
        kind = c.get("kind", "gaussian").strip().lower()
        if kind not in ("independence", "gaussian"):
            raise ConfigError(f"{loc.where('copula', 'kind')}: unknown copula {kind!r}")
        has_tau, has_rho = "tau" in c, "rho" in c
        if kind == "gaussian":
            if has_tau == has_rho:
                raise ConfigError(f"{loc.where('copula')}: give exactly one of tau or rho")
            if has_tau:
                taus = _numbers(loc, "copula", "tau", c["tau"])
                try:
                    rhos = [(f"tau={t:g}", kendall_to_pearson(t)) for t in taus]
                except ValueError as exc:
                    raise ConfigError(f"{loc.where('copula', 'tau')}: {exc}") from None
            else:
                vals = _numbers(loc, "copula", "rho", c["rho"])
                if any(abs(r) > 1 for r in vals):
                    raise ConfigError(f"{loc.where('copula', 'rho')}: |rho| must be <= 1")
                rhos = [(f"rho={r:g}", r) for r in vals]
        elif has_tau or has_rho:
            raise ConfigError(f"{loc.where('copula')}: independence takes no tau/rho")

    s = cp["simulation"] if cp.has_section("simulation") else {}
    cfg = ScenarioConfig(baseline, modifiers, frailty, kind, rhos, source=source,
                         sections=set(cp.sections()))
    if "n" in s:
        cfg.n = _number(loc, "simulation", "n", s["n"], int)
    if "seed" in s:
        cfg.seed = _number(loc, "simulation", "seed", s["seed"], int)
    for key in ("grid_start", "grid_end", "grid_step", "treat_prob"):
        if key in s:
            setattr(cfg, key, _number(loc, "simulation", key, s[key]))
    if "min_at_risk" in s:
        cfg.min_at_risk = _number(loc, "simulation", "min_at_risk", s["min_at_risk"], int)
    if cfg.n < 1:
        raise ConfigError(f"{loc.where('simulation', 'n')}: n must be >= 1")
    if not cfg.grid_step > 0:
        raise ConfigError(f"{loc.where('simulation', 'grid_step')}: must be positive")
    if not 0 <= cfg.grid_start < cfg.grid_end:
        raise ConfigError(f"{loc.where('simulation', 'grid_end')}: need 0 <= grid_start < grid_end")
    if not 0 < cfg.treat_prob < 1:
        raise ConfigError(f"{loc.where('simulation', 'treat_prob')}: must lie in (0, 1)")
    admin = _number(loc, "simulation", "admin_time", s["admin_time"]) if "admin_time" in s else None
    rate = _number(loc, "simulation", "censor_rate", s["censor_rate"]) if "censor_rate" in s else None
    if admin is not None or rate is not None:
        try:
            cfg.censoring = Censoring(admin, rate)
        except ValueError as exc:
            raise ConfigError(f"{loc.where('simulation')}: {exc}") from None

    if cp.has_section("output") and "path" in cp["output"]:
        cfg.output = cp["output"]["path"].strip()
    return cfg


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path))


def parse_distribution(spec: str):
    """Parse ``bhn:p1,mu1,p2,mu2``, ``gamma:k,theta[,shift]`` or ``degenerate:c``."""
    fam, _, args = spec.partition(":")
    fam = fam.strip().lower()
    try:
        vals = [float(a) for a in args.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"bad distribution parameters in {spec!r}") from None
    try:
        if fam == "bhn" and len(vals) == 4:
            return BHN(*vals)
        if fam == "gamma" and len(vals) in (2, 3):
            return ShiftedGamma(*vals)
        if fam == "degenerate" and len(vals) == 1:
            return Degenerate(vals[0])
    except ModelError as exc:
        raise ConfigError(f"{spec!r}: {exc}") from None
    raise ConfigError(
        f"cannot parse distribution {spec!r}; use bhn:p1,mu1,p2,mu2, gamma:k,theta[,shift] or degenerate:c"
    )
