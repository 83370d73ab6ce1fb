"""Numerical inversion of one- and multi-dimensional Laplace transforms.

Three rules are available, all expressed as quadrature rules
``f(t) ~ Re sum_k w_k(t) F(z_k(t))``:

``"gaver-stehfest"``
    Stehfest's (Salzer) acceleration of the Gaver functionals
    ``f_1 .. f_M``.  Uses the ``2M`` positive real nodes ``k log2 / t``.
``"gaver"``
    The single Gaver functional ``f_M``: ``M + 1`` nodes ``(M+k) log2 / t``.
    Error decays only like ``1/M`` but noise amplification is mild.
``"talbot"``
    Fixed Talbot contour with ``M`` nodes; needs ``F`` on complex arguments.

Multivariate transforms are inverted by the tensor product of the 1-D
rules, dimension 1 outermost.  Weights are formed from exact integers and
carried at ``precision`` decimal digits; nodes are handed to the evaluator
as ``mpmath`` numbers, so a closed-form evaluator written with ordinary
arithmetic runs at the working precision while a numerical one may convert
to ``float``/``complex``.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial
from typing import Callable, Optional, Sequence

import mpmath

from .exceptions import InversionError, NumericalError

METHODS = ("gaver-stehfest", "gaver", "talbot")

# Defaults per evaluator kind: closed-form evaluators can use many terms,
# numerical (double precision) evaluators must stay below the noise floor,
# which depends on the number of dimensions.
CLOSED_FORM_TERMS = {"gaver-stehfest": 12, "gaver": 12, "talbot": 32}
NUMERICAL_TERMS = {
    "gaver-stehfest": {1: 7, 2: 5, 3: 4},
    "gaver": {1: 7, 2: 7, 3: 4},
    "talbot": {1: 24, 2: 12, 3: 8},
}


@dataclass(frozen=True)
class InversionConfig:
    """Inversion method, number of terms per dimension and working digits.

    ``terms=None`` lets the caller pick a default (see :func:`default_terms`).
    """

    method: str = "gaver-stehfest"
    terms: Optional[int] = None
    precision: int = 40

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown inversion method {self.method!r}; choose from {METHODS}")
        if self.terms is not None and (int(self.terms) != self.terms or self.terms < 1):
            raise ValueError(f"terms must be a positive integer, got {self.terms}")
        if self.method != "talbot" and self.precision < 16:
            raise ValueError("Gaver-type inversion needs precision >= 16 digits")
        if self.precision < 15:
            raise ValueError("precision must be at least 15 digits")

    def resolved(self, dims: int, numerical: bool = True) -> "InversionConfig":
        if self.terms is not None:
            return self
        return InversionConfig(self.method, default_terms(self.method, dims, numerical), self.precision)


def default_terms(method: str, dims: int, numerical: bool = True) -> int:
    if not numerical:
        return CLOSED_FORM_TERMS[method]
    table = NUMERICAL_TERMS[method]
    return table.get(dims, min(table.values()))


def gs_weights(M: int, precision: int = 40) -> list:
    """Weights of the Gaver functional of order ``M``.

    ``w_k = M * C(2M, M) * (-1)^k * C(M, k)`` for ``k = 0..M``, exact
    integers returned as ``mpmath.mpf`` at ``precision`` digits.  The
    ``log2 / t`` scaling and the nodes ``(M + k) log2 / t`` are applied by
    the caller.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    with mpmath.workdps(precision):
        return [mpmath.mpf((-1) ** k * M * comb(2 * M, M) * comb(M, k)) for k in range(M + 1)]


@lru_cache(maxsize=None)
def _stehfest_fractions(M: int) -> tuple:
    """Exact node weights for nodes ``k log2/t``, ``k = 1..2M``.

    Built by combining the Gaver functionals ``f_1..f_M`` with the Salzer
    coefficients ``(-1)^(n+M) n^M / (n! (M-n)!)``.
    """
    out = [Fraction(0)] * (2 * M + 1)
    for n in range(1, M + 1):
        salzer = Fraction((-1) ** (n + M) * n ** M, factorial(n) * factorial(M - n))
        base = n * comb(2 * n, n)
        for k in range(n + 1):
            out[n + k] += salzer * ((-1) ** k * base * comb(n, k))
    return tuple(out[1:])


def stehfest_weights(M: int, precision: int = 40) -> list:
    """Gaver-Stehfest weights ``zeta_1..zeta_2M`` at ``precision`` digits."""
    if M < 1:
        raise ValueError("M must be >= 1")
    with mpmath.workdps(precision):
        return [mpmath.mpf(w.numerator) / w.denominator for w in _stehfest_fractions(M)]


def talbot_parameters(M: int, precision: int = 40):
    """Fixed-Talbot ``(delta_k, gamma_k)`` for ``k = 0..M-1``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    with mpmath.workdps(precision):
        pi = mpmath.pi
        deltas = [mpmath.mpf(2 * M) / 5]
        gammas = [mpmath.exp(deltas[0]) / 2]
        for k in range(1, M):
            th = k * pi / M
            cot = mpmath.cot(th)
            d = 2 * k * pi / 5 * (cot + 1j)
            g = (1 + 1j * th * (1 + cot ** 2) - 1j * cot) * mpmath.exp(d)
            deltas.append(d)
            gammas.append(g)
        return deltas, gammas


def _rule(cfg: InversionConfig, t):
    """1-D rule ``(nodes, weights)`` at time ``t`` with ``f ~ Re sum w F(z)``."""
    M = cfg.terms
    t = mpmath.mpf(t)
    if not t > 0:
        raise ValueError(f"inversion point must be positive, got {t}")
    ln2 = mpmath.log(2)
    if cfg.method == "gaver-stehfest":
        zs = stehfest_weights(M, cfg.precision)
        return [k * ln2 / t for k in range(1, 2 * M + 1)], [z * ln2 / t for z in zs]
    if cfg.method == "gaver":
        ws = gs_weights(M, cfg.precision)
        return [(M + k) * ln2 / t for k in range(M + 1)], [w * ln2 / t for w in ws]
    deltas, gammas = talbot_parameters(M, cfg.precision)
    # symmetric contour: conjugate nodes for k > 0, the real node once
    nodes = [deltas[0] / t]
    weights = [2 * gammas[0] / (5 * t)]
    for d, g in zip(deltas[1:], gammas[1:]):
        nodes += [d / t, mpmath.conj(d) / t]
        weights += [g / (5 * t), mpmath.conj(g) / (5 * t)]
    return nodes, weights


def _evaluate(f, node):
    try:
        return f(*node)
    except NumericalError as exc:
        raise InversionError(tuple(complex(x) if mpmath.im(x) else float(x) for x in node), exc) from exc


def invert(f: Callable, t: Sequence[float], cfg: Optional[InversionConfig] = None,
           numerical: bool = False, workers: Optional[int] = None) -> float:
    """Invert an ``n``-variate transform ``f(q_1, .., q_n)`` at the point ``t``.

    ``numerical`` only matters when ``cfg.terms`` is unset: it selects the
    conservative default meant for double-precision evaluators.  With
    ``workers > 1`` the grid nodes are evaluated on a thread pool; the
    weighted sum is always accumulated in grid order, so the result does not
    depend on scheduling.
    """
    t = tuple(t)
    cfg = (cfg or InversionConfig()).resolved(len(t), numerical)
    with mpmath.workdps(cfg.precision):
        rules = [_rule(cfg, tk) for tk in t]
        grid = list(itertools.product(*(range(len(r[0])) for r in rules)))
        nodes = [tuple(rules[d][0][i] for d, i in enumerate(idx)) for idx in grid]
        if workers and workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                values = list(pool.map(lambda node: _evaluate(f, node), nodes))
        else:
            values = [_evaluate(f, node) for node in nodes]
        terms = []
        for idx, val in zip(grid, values):
            w = mpmath.mpf(1)
            for d, i in enumerate(idx):
                w = w * rules[d][1][i]
            terms.append(w * mpmath.mpmathify(val))
        total = mpmath.fsum(terms)
        return float(mpmath.re(total))


def gs_invert_1d(f: Callable, t: float, cfg: Optional[InversionConfig] = None) -> float:
    """Gaver-Stehfest inversion of a univariate transform at ``t > 0``."""
    cfg = cfg or InversionConfig("gaver-stehfest")
    if cfg.method == "talbot":
        raise ValueError("gs_invert_1d needs a Gaver-type config")
    return invert(f, (t,), cfg)


def gs_invert_nd(f: Callable, t: Sequence[float], cfg: Optional[InversionConfig] = None) -> float:
    """Multivariate Gaver-Stehfest: the 1-D rule applied dimension by dimension."""
    cfg = cfg or InversionConfig("gaver-stehfest")
    if cfg.method == "talbot":
        raise ValueError("gs_invert_nd needs a Gaver-type config")
    return invert(f, t, cfg)


def talbot_invert_1d(f: Callable, t: float, M: int = 32, precision: int = 40) -> float:
    """Fixed-Talbot inversion ``(2/5t) sum_k Re(gamma_k F(delta_k / t))``."""
    if not t > 0:
        raise ValueError("t must be positive")
    with mpmath.workdps(precision):
        deltas, gammas = talbot_parameters(M, precision)
        t = mpmath.mpf(t)
        terms = [mpmath.re(g * mpmath.mpmathify(_evaluate(f, (d / t,)))) for d, g in zip(deltas, gammas)]
        return float(2 / (5 * t) * mpmath.fsum(terms))


def talbot_invert_2d(f: Callable, t1: float, t2: float, M: int = 32, precision: int = 40) -> float:
    """Two-dimensional fixed Talbot with the conjugate-node term in the inner sum."""
    if not (t1 > 0 and t2 > 0):
        raise ValueError("t1, t2 must be positive")
    with mpmath.workdps(precision):
        deltas, gammas = talbot_parameters(M, precision)
        t1, t2 = mpmath.mpf(t1), mpmath.mpf(t2)
        outer = []
        for d1, g1 in zip(deltas, gammas):
            inner = []
            for d2, g2 in zip(deltas, gammas):
                a = mpmath.mpmathify(_evaluate(f, (d1 / t1, d2 / t2)))
                b = mpmath.mpmathify(_evaluate(f, (d1 / t1, mpmath.conj(d2) / t2)))
                inner.append(g2 * a + mpmath.conj(g2) * b)
            outer.append(mpmath.re(g1 * mpmath.fsum(inner)))
        return float(2 / (25 * t1 * t2) * mpmath.fsum(outer))
