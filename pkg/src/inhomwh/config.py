"""Problem description files.

A config is a YAML mapping with exactly these top-level keys::

    states: [e+, e-]
    drift: {e+: 2, e-: -3}
    breakpoints: [2, 8]
    generators:            # one row-major matrix per regime, in `states` order
      - [[-2, 2], [1, -1]]
      - [[-3, 3], [2, -2]]
      - [[-5, 5], [3, -3]]
    discount: 0.5
    functional: {kind: Pi-, i: e+, j: e-}      # `level` required for Psi+/Psi-
    inversion: {method: gaver-stehfest, terms: null, precision: 40}   # optional
    mc: {paths: 10000, seed: 1, horizon: null}                        # optional

Every error is a :class:`ConfigError` naming the offending key path.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np
import yaml

from .chain import DriftModel, RegimeSchedule, validate_generator
from .exceptions import ConfigError
from .functionals import KINDS
from .laplace import METHODS, InversionConfig
from .montecarlo import SimConfig

REQUIRED = ("states", "drift", "breakpoints", "generators", "discount", "functional")
OPTIONAL = ("inversion", "mc")


@dataclass(frozen=True)
class FunctionalSpec:
    kind: str
    i: str
    j: str
    level: Optional[float] = None


@dataclass(frozen=True)
class ProblemConfig:
    schedule: RegimeSchedule
    drift: DriftModel
    discount: float
    functional: FunctionalSpec
    inversion: InversionConfig
    mc: SimConfig
    digest: str

    @property
    def states(self) -> tuple:
        return self.drift.states


def _number(value, key, positive=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    x = float(value)
    if not np.isfinite(x):
        raise ConfigError(key, "must be finite")
    if positive and not x > 0:
        raise ConfigError(key, f"must be positive, got {value}")
    return x


def _integer(value, key, minimum):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(key, f"expected an integer >= {minimum}, got {value!r}")
    return value


def _mapping(value, key, allowed):
    if not isinstance(value, dict):
        raise ConfigError(key, f"expected a mapping, got {type(value).__name__}")
    for k in value:
        if k not in allowed:
            raise ConfigError(f"{key}.{k}", f"unknown key (allowed: {', '.join(allowed)})")
    return value


def _states(raw):
    if not isinstance(raw, list) or not raw:
        raise ConfigError("states", "expected a nonempty list of labels")
    labels = [str(s) for s in raw]
    if len(set(labels)) != len(labels):
        raise ConfigError("states", "labels must be unique")
    return labels


def _drift(raw, states):
    if not isinstance(raw, dict):
        raise ConfigError("drift", "expected a mapping state -> rate")
    raw = {str(k): v for k, v in raw.items()}
    for k in raw:
        if k not in states:
            raise ConfigError(f"drift.{k}", "unknown state")
    rates = []
    for s in states:
        if s not in raw:
            raise ConfigError(f"drift.{s}", "missing drift for state")
        x = _number(raw[s], f"drift.{s}")
        if x == 0:
            raise ConfigError(f"drift.{s}", f"drift of state {s} must be nonzero")
        rates.append(x)
    if all(r > 0 for r in rates) or all(r < 0 for r in rates):
        raise ConfigError("drift", "needs both positive and negative states")
    return DriftModel(states, rates)


def _breakpoints(raw):
    if not isinstance(raw, list):
        raise ConfigError("breakpoints", "expected a list (possibly empty)")
    bps = [_number(x, f"breakpoints[{k}]", positive=True) for k, x in enumerate(raw)]
    for k in range(1, len(bps)):
        if bps[k] <= bps[k - 1]:
            raise ConfigError(f"breakpoints[{k}]", "breakpoints must be strictly increasing")
    return bps


def _generators(raw, count, dim):
    if not isinstance(raw, list):
        raise ConfigError("generators", "expected a list of matrices")
    if len(raw) != count:
        raise ConfigError("generators", f"expected {count}, found {len(raw)}")
    out = []
    for g, mat in enumerate(raw):
        key = f"generators[{g}]"
        if not isinstance(mat, list) or len(mat) != dim:
            raise ConfigError(key, f"expected {dim} rows")
        rows = []
        for r, row in enumerate(mat):
            if not isinstance(row, list) or len(row) != dim:
                raise ConfigError(f"{key}[{r}]", f"expected {dim} entries")
            rows.append([_number(x, f"{key}[{r}][{c}]") for c, x in enumerate(row)])
        report = validate_generator(rows)
        if not report.ok:
            raise ConfigError(key, "; ".join(report.violations))
        out.append(rows)
    return out


def _functional(raw, drift):
    raw = _mapping(raw, "functional", ("kind", "i", "j", "level"))
    for k in ("kind", "i", "j"):
        if k not in raw:
            raise ConfigError(f"functional.{k}", "missing")
    kind = raw["kind"]
    if kind not in KINDS:
        raise ConfigError("functional.kind", f"expected one of {', '.join(KINDS)}, got {kind!r}")
    i, j = str(raw["i"]), str(raw["j"])
    plus, minus = drift.plus_states, drift.minus_states
    need = {"Pi+": (minus, plus), "Psi+": (plus, plus), "Pi-": (plus, minus), "Psi-": (minus, minus)}[kind]
    for key, label, allowed in (("functional.i", i, need[0]), ("functional.j", j, need[1])):
        if label not in drift.states:
            raise ConfigError(key, f"unknown state {label!r}")
        if label not in allowed:
            raise ConfigError(key, f"{kind} needs a state from {list(allowed)}, got {label!r}")
    level = raw.get("level")
    if kind.startswith("Psi"):
        level = _number(level, "functional.level", positive=True)
    elif level is not None:
        raise ConfigError("functional.level", f"{kind} takes no level")
    return FunctionalSpec(kind, i, j, level)


def _inversion(raw):
    if raw is None:
        return InversionConfig()
    raw = _mapping(raw, "inversion", ("method", "terms", "precision"))
    method = raw.get("method", "gaver-stehfest")
    if method not in METHODS:
        raise ConfigError("inversion.method", f"expected one of {', '.join(METHODS)}, got {method!r}")
    terms = raw.get("terms")
    if terms is not None:
        terms = _integer(terms, "inversion.terms", 1)
    precision = _integer(raw.get("precision", 40), "inversion.precision", 16)
    return InversionConfig(method, terms, precision)


def _mc(raw):
    if raw is None:
        return SimConfig()
    raw = _mapping(raw, "mc", ("paths", "seed", "horizon"))
    paths = _integer(raw.get("paths", 10_000), "mc.paths", 1)
    seed = _integer(raw.get("seed", 0), "mc.seed", 0)
    horizon = _number(raw.get("horizon"), "mc.horizon", positive=True, allow_none=True)
    return SimConfig(paths, horizon, seed)


def parse_config(text: str) -> ProblemConfig:
    """Parse and validate a problem description; see the module docstring."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a mapping")
    for k in raw:
        if k not in REQUIRED + OPTIONAL:
            raise ConfigError(str(k), "unknown key")
    for k in REQUIRED:
        if k not in raw:
            raise ConfigError(k, "missing")

    states = _states(raw["states"])
    drift = _drift(raw["drift"], states)
    bps = _breakpoints(raw["breakpoints"])
    gens = _generators(raw["generators"], len(bps) + 1, len(states))
    discount = _number(raw["discount"], "discount", positive=True)
    spec = _functional(raw["functional"], drift)
    inv = _inversion(raw.get("inversion"))
    mc = _mc(raw.get("mc"))

    canonical = {
        "states": states, "drift": list(drift.rates), "breakpoints": bps, "generators": gens,
        "discount": discount, "functional": [spec.kind, spec.i, spec.j, spec.level],
        "inversion": [inv.method, inv.terms, inv.precision],
        "mc": [mc.paths, mc.seed, mc.horizon],
    }
    digest = hashlib.sha256(json.dumps(canonical, sort_keys=True).encode()).hexdigest()[:16]
    return ProblemConfig(RegimeSchedule(bps, gens), drift, discount, spec, inv, mc, digest)


def load_config(path) -> ProblemConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def bundled_fluid_text() -> str:
    """Text of the bundled fluid-queue example config."""
    return resources.files("inhomwh").joinpath("data/fluid.cfg").read_text(encoding="utf-8")
