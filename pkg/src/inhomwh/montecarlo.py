"""Monte Carlo simulation of the piecewise-constant chain and its passage times.

Each path ``p`` draws from its own counter-based Philox stream (key = seed,
counter offset = ``p``), so a path depends only on ``(seed, p)`` and results
do not depend on how paths are split between workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chain import DriftModel, RegimeSchedule
from .exceptions import ModelError

DEFAULT_HORIZON_FACTOR = 40.0
_BATCH = 64


@dataclass(frozen=True)
class SimConfig:
    """Path budget, horizon ``T`` (``None`` means ``40 / c``), seed and worker count."""

    paths: int = 10_000
    horizon: Optional[float] = None
    seed: int = 0
    workers: Optional[int] = None

    def __post_init__(self):
        if int(self.paths) != self.paths or self.paths < 1:
            raise ValueError(f"paths must be a positive integer, got {self.paths}")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")

    def resolved_horizon(self, c: float) -> float:
        return self.horizon if self.horizon is not None else DEFAULT_HORIZON_FACTOR / c


@dataclass(frozen=True)
class PathSample:
    """A trajectory on ``[0, horizon)``.

    ``states[0]`` is the initial state and ``states[k + 1]`` is entered at
    ``jump_times[k]``.  Breakpoint re-draws appear as entries where the state
    does not change.  States are indices into the drift/generator order.
    """

    jump_times: np.ndarray
    states: np.ndarray
    horizon: float

    def state_at(self, t: float) -> int:
        if not 0 <= t < self.horizon:
            raise ValueError(f"t must lie in [0, {self.horizon}), got {t}")
        return int(self.states[np.searchsorted(self.jump_times, t, side="right")])

    def sojourns(self):
        """Yield ``(start, end, state)`` for each piece of the path."""
        edges = np.concatenate(([0.0], self.jump_times, [self.horizon]))
        for a, b, s in zip(edges[:-1], edges[1:], self.states):
            yield float(a), float(b), int(s)


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    std_error: float
    paths: int
    truncation_bias_bound: float
    seed: int
    horizon: float = field(default=math.inf)
    censored: int = 0


def _stream(seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, path_index]))


class _Uniforms:
    """Buffered uniforms from one path's stream (the buffering is deterministic)."""

    def __init__(self, rng):
        self._rng = rng
        self._buf = rng.random(_BATCH)
        self._pos = 0

    def __call__(self) -> float:
        if self._pos == _BATCH:
            self._buf = self._rng.random(_BATCH)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


class _Dynamics:
    """Per-regime holding rates and cumulative jump distributions."""

    def __init__(self, schedule: RegimeSchedule):
        self.breakpoints = schedule.breakpoints
        self.rates = []
        self.cumulative = []
        for G in schedule.generators:
            M = G.entries
            out = -np.diag(M).copy()
            self.rates.append(out)
            jump = np.where(out[:, None] > 0, M / np.where(out > 0, out, 1.0)[:, None], 0.0)
            np.fill_diagonal(jump, 0.0)
            self.cumulative.append(np.cumsum(jump, axis=1))

    def events(self, start: int, horizon: float, draw):
        """Yield ``(time, new_state)`` for every jump or breakpoint re-draw before ``horizon``."""
        t, state = 0.0, start
        regime = 0
        nb = len(self.breakpoints)
        while True:
            end = self.breakpoints[regime] if regime < nb else math.inf
            rate = self.rates[regime][state]
            hold = -math.log1p(-draw()) / rate if rate > 0 else math.inf
            if t + hold >= end:
                # cut at the breakpoint and redraw under the next regime
                t = end
                regime += 1
                if t >= horizon:
                    return
                yield t, state
                continue
            t += hold
            if t >= horizon:
                return
            row = self.cumulative[regime][state]
            nxt = int(np.searchsorted(row, draw() * row[-1], side="right"))
            state = min(nxt, len(row) - 1)
            yield t, state


def simulate_path(schedule: RegimeSchedule, start, cfg: SimConfig, path_index: int,
                  drift: Optional[DriftModel] = None, horizon: Optional[float] = None) -> PathSample:
    """Simulate one path on ``[0, T)``, ``T = horizon or cfg.horizon``.

    ``start`` is a state index, or a label when ``drift`` is given.  Holding
    times are exponential with rate ``-G_k(i, i)``; a holding time that would
    run past a breakpoint is cut there and redrawn under the next regime.
    """
    T = horizon if horizon is not None else cfg.horizon
    if T is None or not T > 0:
        raise ValueError("simulate_path needs a positive horizon")
    s0 = drift.index(start) if drift is not None else int(start)
    if not 0 <= s0 < schedule.dim:
        raise ModelError(f"start state {start!r} out of range")
    dyn = _Dynamics(schedule)
    times, states = [], [s0]
    for t, s in dyn.events(s0, T, _Uniforms(_stream(cfg.seed, path_index))):
        times.append(t)
        states.append(s)
    return PathSample(np.array(times, dtype=float), np.array(states, dtype=int), float(T))


@dataclass(frozen=True)
class Crossing:
    time: float
    state: int
    value: float


def _crossing(pieces, v, level: float, sign: str, c: float) -> Optional[Crossing]:
    """First crossing of ``+level`` (``sign='+'``) or ``-level`` by ``phi``.

    ``pieces`` yields ``(start, end, state)``; ``phi`` has slope ``v[state]``
    on each piece.  ``tau+ = inf{r : phi_r > level}`` and
    ``tau- = inf{r : phi_r < -level}``.
    """
    phi = 0.0
    for a, b, s in pieces:
        slope = v[s]
        if sign == "+":
            gap = level - phi
            hit = slope > 0 and slope * (b - a) > gap
        else:
            gap = -level - phi
            hit = slope < 0 and slope * (b - a) < gap
        if hit:
            tau = a + gap / slope
            return Crossing(tau, s, math.exp(-c * tau))
        phi += slope * (b - a)
    return None


def passage_functional(path: PathSample, drift: DriftModel, level: float, sign: str, c: float) -> Optional[Crossing]:
    """Exact first-passage of ``phi`` through ``+level`` / ``-level`` on a stored path.

    Returns ``None`` when the path is censored (no crossing before its horizon).
    """
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    if level < 0:
        raise ValueError("level must be nonnegative")
    return _crossing(path.sojourns(), drift.v, level, sign, c)


def _lazy_pieces(dyn, start, horizon, draw):
    t, s = 0.0, start
    for t_next, s_next in dyn.events(start, horizon, draw):
        yield t, t_next, s
        t, s = t_next, s_next
    yield t, horizon, s


_KIND_ARGS = {
    # kind: (sign, start must be in, target must be in, fixed level)
    "Pi+": ("+", "minus", "plus", 0.0),
    "Psi+": ("+", "plus", "plus", None),
    "Pi-": ("-", "plus", "minus", 0.0),
    "Psi-": ("-", "minus", "minus", None),
}


def _check_kind(drift, kind, i, j, level):
    if kind not in _KIND_ARGS:
        raise ModelError(f"unknown functional kind {kind!r}; choose from {tuple(_KIND_ARGS)}")
    sign, si, sj, fixed = _KIND_ARGS[kind]
    parts = {"plus": drift.plus_states, "minus": drift.minus_states}
    if i not in parts[si]:
        raise ModelError(f"{kind}: start state {i!r} must be a {si} state")
    if j not in parts[sj]:
        raise ModelError(f"{kind}: target state {j!r} must be a {sj} state")
    if fixed is None:
        if level is None or not level > 0:
            raise ModelError(f"{kind} needs a positive level, got {level}")
        return sign, float(level)
    return sign, fixed


def _path_values(args):
    schedule, v, start, target, level, sign, c, T, seed, lo, hi = args
    dyn = _Dynamics(schedule)
    out = np.zeros(hi - lo)
    censored = 0
    for k, p in enumerate(range(lo, hi)):
        draw = _Uniforms(_stream(seed, p))
        hit = _crossing(_lazy_pieces(dyn, start, T, draw), v, level, sign, c)
        if hit is None:
            censored += 1
        elif hit.state == target:
            out[k] = hit.value
    return out, censored


def estimate_functional(schedule: RegimeSchedule, drift: DriftModel, c: float, kind: str,
                        i, j, level: Optional[float] = None, cfg: Optional[SimConfig] = None) -> EstimatorResult:
    """Monte Carlo estimate of ``Pi+/-`` or ``Psi+/-`` with its standard error.

    Censored paths (no crossing before the horizon) contribute 0; the bias
    this introduces is at most ``exp(-c T)`` and is reported.
    """
    schedule.check_drift(drift)
    if not c > 0:
        raise ModelError(f"discount must be positive, got {c}")
    cfg = cfg or SimConfig()
    sign, lvl = _check_kind(drift, kind, i, j, level)
    T = cfg.resolved_horizon(c)
    common = (schedule, drift.v, drift.index(i), drift.index(j), lvl, sign, c, T, cfg.seed)
    workers = cfg.workers or 1
    if workers > 1:
        edges = np.linspace(0, cfg.paths, workers * 4 + 1).astype(int)
        chunks = [common + (int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_path_values, chunks))
    else:
        parts = [_path_values(common + (0, cfg.paths))]
    values = np.concatenate([p[0] for p in parts])
    censored = sum(p[1] for p in parts)
    mean, se = _mean_and_se(values)
    return EstimatorResult(mean, se, cfg.paths, math.exp(-c * T), cfg.seed, T, censored)


def _mean_and_se(values: np.ndarray):
    """Exactly rounded (hence order-free) mean and standard error.

    Shifting by the first value makes a constant sample give exactly zero
    variance and its own value as the mean.
    """
    n = len(values)
    shift = float(values[0])
    dev = values - shift
    mdev = math.fsum(dev) / n
    if n < 2:
        return shift + mdev, math.inf
    var = math.fsum((dev - mdev) ** 2) / (n - 1)
    return shift + mdev, math.sqrt(var / n)
