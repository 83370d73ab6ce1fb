"""Discounted first-passage functionals of the piecewise-constant chain.

``Pi+(i, j)`` (``i`` in E-, ``j`` in E+) is ``E[exp(-c tau_0^+); X at tau_0^+ = j | X_0 = i]``
and ``Psi+(t, i, j)`` (``i, j`` in E+) is ``E[exp(-c tau_t^+); X at tau_t^+ = j | X_0 = i]``.
Both are obtained by inverting, at the breakpoint increments
``(s_1, s_2 - s_1, ..)``, an ``n``-variate Laplace transform whose value at
``(q_1, .., q_n)`` is a level sum over the randomized chain's factorization.
The ``-`` versions go through the reflected problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chain import DriftModel, RegimeSchedule, matrix_exp, reflect_problem
from .exceptions import ModelError
from .factorization import BlockFactorization, block_factorize, classical_factorize
from .laplace import InversionConfig, invert

KINDS = ("Pi+", "Psi+", "Pi-", "Psi-")

# values outside [0, 1] by more than this are flagged in the diagnostics
RANGE_TOL = 2e-3


@dataclass(frozen=True)
class FunctionalValue:
    """A computed functional together with how it was obtained.

    ``diagnostics`` holds ``method``, ``terms``, ``nodes`` (transform
    evaluations), ``residual`` (largest factorization residual seen) and
    ``in_range`` (False if ``value`` leaves ``[0, 1]`` by more than
    ``RANGE_TOL``; the value itself is never clamped).
    """

    kind: str
    from_state: object
    to_state: object
    value: float
    level: Optional[float] = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __float__(self):
        return self.value


def _position(states, label, what):
    try:
        return states.index(label)
    except ValueError:
        raise ModelError(f"{what} must be one of {list(states)}, got {label!r}") from None


def _rate_product(rates):
    out = 1.0
    for x in rates:
        out = out * x
    return out


def hat_pi_plus(block: BlockFactorization, i, j):
    """Transform of ``Pi+(i, j; .)`` at the block's rates: ``sum_l Lambda+_{0l}(i, j) / prod q``."""
    a = _position(block.drift.minus_states, i, "i (a minus state)")
    b = _position(block.drift.plus_states, j, "j (a plus state)")
    total = sum(block.lambda_blocks[0, l][a, b] for l in range(block.levels))
    return total / _rate_product(block.rates)


def hat_psi_plus(block: BlockFactorization, t: float, i, j):
    """Transform of ``Psi+(t, i, j; .)``: level-summed ``exp(t G+)`` entries over ``prod q``."""
    if not t > 0:
        raise ValueError(f"level t must be positive, got {t}")
    a = _position(block.drift.plus_states, i, "i (a plus state)")
    b = _position(block.drift.plus_states, j, "j (a plus state)")
    p = len(block.drift.plus_index)
    E = matrix_exp(block.g_plus(), t)
    total = sum(E[a, l * p + b] for l in range(block.levels))
    return total / _rate_product(block.rates)


def _node_value(x, complex_ok):
    if complex_ok and complex(x).imag != 0:
        return complex(x)
    return float(np.real(complex(x)))


def _invert_functional(schedule, drift, c, transform, inv, workers=None):
    """Shared driver: invert ``transform(block)`` over the rate grid."""
    inv = inv or InversionConfig()
    scalar = len(drift.plus_index) == 1 and len(drift.minus_index) == 1
    if inv.method == "talbot" and not scalar:
        raise ModelError("Talbot inversion needs the scalar case |E+| = |E-| = 1")
    inv = inv.resolved(schedule.n, numerical=True)
    cache = {}
    residuals = []

    def evaluate(*qs):
        key = tuple(_node_value(x, scalar) for x in qs)
        if key not in cache:
            block = block_factorize(schedule, drift, c, key)
            residuals.append(block.residual())
            cache[key] = transform(block)
        return cache[key]

    value = invert(evaluate, schedule.increments(), inv, workers=workers)
    diag = {
        "method": inv.method,
        "terms": inv.terms,
        "precision": inv.precision,
        "nodes": len(cache),
        "residual": max(residuals) if residuals else 0.0,
    }
    return value, diag


def _finish(kind, i, j, value, diag, level=None):
    diag["in_range"] = bool(-RANGE_TOL <= value <= 1 + RANGE_TOL)
    return FunctionalValue(kind, i, j, float(value), level, diag)


def _homogeneous_diag(quad):
    return {"method": "closed", "terms": 0, "precision": 0, "nodes": 0, "residual": quad.residual}


def pi_plus(schedule: RegimeSchedule, drift: DriftModel, c: float, i, j,
            inv: Optional[InversionConfig] = None, workers=None) -> FunctionalValue:
    """``Pi+_c(i, j; s_1..s_n)`` for ``i`` in E-, ``j`` in E+.

    With no breakpoints the classical factorization gives the value directly.
    """
    schedule.check_drift(drift)
    a = _position(drift.minus_states, i, "i (a minus state)")
    b = _position(drift.plus_states, j, "j (a plus state)")
    if schedule.n == 0:
        quad = classical_factorize(schedule.generators[0], drift, c)
        return _finish("Pi+", i, j, float(quad.lambda_plus[a, b]), _homogeneous_diag(quad))
    value, diag = _invert_functional(schedule, drift, c, lambda blk: hat_pi_plus(blk, i, j), inv, workers)
    return _finish("Pi+", i, j, value, diag)


def psi_plus(schedule: RegimeSchedule, drift: DriftModel, c: float, t: float, i, j,
             inv: Optional[InversionConfig] = None, workers=None) -> FunctionalValue:
    """``Psi+_c(t, i, j; s_1..s_n)`` for ``i, j`` in E+ and level ``t > 0``."""
    schedule.check_drift(drift)
    if not t > 0:
        raise ValueError(f"level t must be positive, got {t}")
    a = _position(drift.plus_states, i, "i (a plus state)")
    b = _position(drift.plus_states, j, "j (a plus state)")
    if schedule.n == 0:
        quad = classical_factorize(schedule.generators[0], drift, c)
        value = float(matrix_exp(quad.g_plus, t)[a, b])
        return _finish("Psi+", i, j, value, _homogeneous_diag(quad), t)
    value, diag = _invert_functional(schedule, drift, c, lambda blk: hat_psi_plus(blk, t, i, j), inv, workers)
    return _finish("Psi+", i, j, value, diag, t)


def pi_minus(schedule: RegimeSchedule, drift: DriftModel, c: float, i, j,
             inv: Optional[InversionConfig] = None, workers=None) -> FunctionalValue:
    """``Pi-_c(i, j)`` for ``i`` in E+, ``j`` in E-: ``Pi+`` of the reflected problem."""
    sched, refl = reflect_problem(schedule, drift)
    out = pi_plus(sched, refl, c, i, j, inv, workers)
    return FunctionalValue("Pi-", i, j, out.value, None, out.diagnostics)


def psi_minus(schedule: RegimeSchedule, drift: DriftModel, c: float, t: float, i, j,
              inv: Optional[InversionConfig] = None, workers=None) -> FunctionalValue:
    """``Psi-_c(t, i, j)`` for ``i, j`` in E-: ``Psi+`` of the reflected problem."""
    sched, refl = reflect_problem(schedule, drift)
    out = psi_plus(sched, refl, c, t, i, j, inv, workers)
    return FunctionalValue("Psi-", i, j, out.value, t, out.diagnostics)


def functional(kind: str, schedule, drift, c, i, j, level=None, inv=None, workers=None) -> FunctionalValue:
    """Dispatch on ``kind`` in ``("Pi+", "Psi+", "Pi-", "Psi-")``."""
    if kind not in KINDS:
        raise ModelError(f"unknown functional kind {kind!r}; choose from {KINDS}")
    if kind.startswith("Psi"):
        if level is None:
            raise ModelError(f"{kind} needs a level t")
        fn = psi_plus if kind == "Psi+" else psi_minus
        return fn(schedule, drift, c, level, i, j, inv, workers)
    fn = pi_plus if kind == "Pi+" else pi_minus
    return fn(schedule, drift, c, i, j, inv, workers)
