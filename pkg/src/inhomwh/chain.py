"""Model types for piecewise-constant Markov chains and the randomized chain.

State ordering conventions
--------------------------
Every matrix on ``E`` follows the order of ``DriftModel.states``.  The
randomized chain on ``{0..n} x E`` is built *level-major* (all states of
level 0, then level 1, ...).  The factorization code works in *sign-major*
order, ``(0,E+), .., (n,E+), (0,E-), .., (n,E-)``; :func:`sign_major_permutation`
is the single place where one is converted into the other.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .exceptions import ModelError

GENERATOR_TOL = 1e-10


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_generator`."""

    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_generator(M, tol: float = GENERATOR_TOL) -> ValidationReport:
    """Check that ``M`` is a conservative generator.

    Off-diagonal entries must be ``>= -tol`` and every row must sum to zero
    within ``tol``.  Nothing is raised; each violation is described in the
    returned report by row/column.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return ValidationReport((f"matrix must be square, got shape {M.shape}",))
    problems = []
    if not np.all(np.isfinite(M)):
        problems.append("matrix has non-finite entries")
    d = M.shape[0]
    for r in range(d):
        for col in range(d):
            if r != col and M[r, col] < -tol:
                problems.append(f"entry ({r}, {col}) is negative: {M[r, col]:g}")
        s = M[r].sum()
        if abs(s) > tol:
            problems.append(f"row {r} sums to {s:.6g}")
    return ValidationReport(tuple(problems))


class GeneratorMatrix:
    """Read-only conservative generator (rates per unit time).

    Construction fails with :class:`ModelError` if ``validate_generator``
    reports a violation; inputs are never renormalized.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries, tol: float = GENERATOR_TOL):
        if isinstance(entries, GeneratorMatrix):
            entries = entries.entries
        arr = np.array(entries, dtype=float, copy=True)
        report = validate_generator(arr, tol)
        if not report.ok:
            raise ModelError("invalid generator: " + "; ".join(report.violations))
        arr.setflags(write=False)
        self._entries = arr

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self._entries if dtype is None else self._entries.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, GeneratorMatrix):
            return NotImplemented
        return np.array_equal(self._entries, other._entries)

    def __hash__(self):
        return hash(self._entries.tobytes())

    def __repr__(self):
        return f"GeneratorMatrix({self._entries.tolist()!r})"


def as_generator(G) -> GeneratorMatrix:
    return G if isinstance(G, GeneratorMatrix) else GeneratorMatrix(G)


@dataclass(frozen=True)
class DriftModel:
    """State labels and the nonzero drift ``v`` of the additive functional."""

    states: tuple
    rates: tuple

    def __init__(self, states: Sequence[Hashable], rates):
        states = tuple(states)
        if isinstance(rates, dict):
            missing = [s for s in states if s not in rates]
            if missing:
                raise ModelError(f"drift missing for states {missing}")
            rates = [rates[s] for s in states]
        rates = tuple(float(r) for r in rates)
        if len(states) != len(rates):
            raise ModelError(f"{len(states)} states but {len(rates)} drift values")
        if len(set(states)) != len(states):
            raise ModelError("state labels must be unique")
        zero = [s for s, r in zip(states, rates) if r == 0.0 or not np.isfinite(r)]
        if zero:
            raise ModelError(f"drift must be finite and nonzero; offending states {zero}")
        if all(r > 0 for r in rates) or all(r < 0 for r in rates):
            raise ModelError("drift must have both positive and negative states")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "rates", rates)

    @property
    def v(self) -> np.ndarray:
        return np.array(self.rates)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def plus_index(self) -> np.ndarray:
        return np.flatnonzero(self.v > 0)

    @property
    def minus_index(self) -> np.ndarray:
        return np.flatnonzero(self.v < 0)

    @property
    def plus_states(self) -> tuple:
        return tuple(self.states[i] for i in self.plus_index)

    @property
    def minus_states(self) -> tuple:
        return tuple(self.states[i] for i in self.minus_index)

    def index(self, state) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise ModelError(f"unknown state {state!r}") from None

    def reflected(self) -> "DriftModel":
        return DriftModel(self.states, [-r for r in self.rates])


@dataclass(frozen=True)
class RegimeSchedule:
    """Breakpoints ``0 < s_1 < ... < s_n`` and generators ``G_1..G_{n+1}``.

    Regime ``k`` (0-based) governs ``[s_k, s_{k+1})`` with ``s_0 = 0``; the
    last regime runs on ``[s_n, inf)``.
    """

    breakpoints: tuple
    generators: tuple

    def __init__(self, breakpoints, generators):
        bps = tuple(float(s) for s in breakpoints)
        gens = tuple(as_generator(G) for G in generators)
        if len(gens) != len(bps) + 1:
            raise ModelError(f"{len(bps)} breakpoints need {len(bps) + 1} generators, got {len(gens)}")
        if any(s <= 0 or not np.isfinite(s) for s in bps):
            raise ModelError("breakpoints must be positive and finite")
        if any(b <= a for a, b in zip(bps, bps[1:])):
            raise ModelError("breakpoints must be strictly increasing")
        dims = {G.dim for G in gens}
        if len(dims) != 1:
            raise ModelError(f"generators have differing dimensions {sorted(dims)}")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "generators", gens)

    @classmethod
    def homogeneous(cls, G) -> "RegimeSchedule":
        return cls((), (G,))

    @property
    def n(self) -> int:
        return len(self.breakpoints)

    @property
    def dim(self) -> int:
        return self.generators[0].dim

    def regime_at(self, t: float) -> int:
        """0-based index of the regime active at time ``t`` (left-closed)."""
        return bisect.bisect_right(self.breakpoints, t)

    def increments(self) -> tuple:
        """``(s_1, s_2 - s_1, ..., s_n - s_{n-1})``."""
        edges = (0.0,) + self.breakpoints
        return tuple(b - a for a, b in zip(edges, edges[1:]))

    def check_drift(self, drift: DriftModel):
        if drift.dim != self.dim:
            raise ModelError(f"drift has {drift.dim} states, generators have dimension {self.dim}")


@dataclass(frozen=True)
class AugmentedModel:
    """Randomized time-homogeneous chain on ``{0..n} x E`` (level-major)."""

    schedule: RegimeSchedule
    drift: DriftModel
    rates: tuple
    gen: GeneratorMatrix
    lifted_drift: DriftModel = field(repr=False)

    @property
    def levels(self) -> int:
        return len(self.rates) + 1


def _check_rates(q, n):
    q = tuple(q)
    if len(q) != n:
        raise ModelError(f"expected {n} randomization rates, got {len(q)}")
    for x in q:
        # non-real rates only arise as transform arguments (analytic continuation)
        if np.iscomplexobj(x) and np.imag(x) != 0:
            if not np.isfinite(x):
                raise ModelError(f"randomization rates must be finite, got {x}")
        elif not float(np.real(x)) > 0:
            raise ModelError(f"randomization rates must be positive, got {x}")
    return q


def augmented_blocks(generators, q):
    """Dense level-major matrix ``[[G_1 - q_1 I, q_1 I, ..], .., [.., G_{n+1}]]``.

    Works for complex ``q`` (used by transform continuation); no validation.
    """
    n = len(q)
    d = np.asarray(generators[0]).shape[0]
    dtype = complex if any(isinstance(x, complex) for x in q) else float
    out = np.zeros(((n + 1) * d, (n + 1) * d), dtype=dtype)
    eye = np.eye(d)
    for k in range(n + 1):
        blk = slice(k * d, (k + 1) * d)
        out[blk, blk] = np.asarray(generators[k], dtype=float)
        if k < n:
            out[blk, blk] -= q[k] * eye
            out[blk, slice((k + 1) * d, (k + 2) * d)] = q[k] * eye
    return out


def lift_drift(drift: DriftModel, levels: int) -> DriftModel:
    return DriftModel([(k, s) for k in range(levels) for s in drift.states], list(drift.rates) * levels)


def build_augmented_generator(schedule: RegimeSchedule, drift: DriftModel, q) -> AugmentedModel:
    """Randomize the breakpoints with exponential clocks of rates ``q``.

    With ``n = 0`` the result is the single generator itself.
    """
    schedule.check_drift(drift)
    q = tuple(float(x) for x in _check_rates(q, schedule.n))
    dense = augmented_blocks(schedule.generators, q)
    return AugmentedModel(schedule, drift, q, GeneratorMatrix(dense), lift_drift(drift, schedule.n + 1))


def marginal_counter_generator(q) -> GeneratorMatrix:
    """Generator of the level counter alone: ``-q_k`` on the diagonal, ``q_k`` above it."""
    q = [float(x) for x in q]
    if any(not x > 0 for x in q):
        raise ModelError("rates must be positive")
    n = len(q)
    M = np.zeros((n + 1, n + 1))
    for k, x in enumerate(q):
        M[k, k] = -x
        M[k, k + 1] = x
    return GeneratorMatrix(M)


def sign_major_permutation(drift: DriftModel, levels: int = 1) -> np.ndarray:
    """Indices mapping level-major order to sign-major order.

    ``A_sign = A[np.ix_(p, p)]`` for ``p = sign_major_permutation(...)``.
    """
    d = drift.dim
    plus = [k * d + i for k in range(levels) for i in drift.plus_index]
    minus = [k * d + i for k in range(levels) for i in drift.minus_index]
    return np.array(plus + minus, dtype=int)


def matrix_exp(M, t: float = 1.0) -> np.ndarray:
    """``exp(t M)`` by scaling and squaring with a Pade approximant."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    M = np.asarray(M)
    if t == 0:
        return np.eye(M.shape[0], dtype=M.dtype)
    A = t * M
    if np.array_equal(A, np.triu(A)) or np.array_equal(A, np.tril(A)):
        # scipy.linalg.expm fills a triangular result from naive divided
        # differences, which cancel when two diagonal entries nearly coincide
        # (level blocks at almost equal rates); the sparse variant uses a
        # stable formula
        return scipy.sparse.linalg.expm(A)
    return scipy.linalg.expm(A)


def transition_matrix(schedule: RegimeSchedule, s: float, t: float) -> np.ndarray:
    """Transition probabilities ``P(X_t = j | X_s = i)`` of the inhomogeneous chain."""
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    P = np.eye(schedule.dim)
    u = s
    while u < t:
        k = schedule.regime_at(u)
        end = schedule.breakpoints[k] if k < schedule.n else np.inf
        v = min(end, t)
        P = P @ matrix_exp(schedule.generators[k].entries, v - u)
        u = v
    return P


def reflect_problem(schedule: RegimeSchedule, drift: DriftModel):
    """Flip the drift sign, turning ``-`` passage problems into ``+`` ones."""
    return schedule, drift.reflected()
