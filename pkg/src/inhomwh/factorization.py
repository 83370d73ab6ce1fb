"""Wiener-Hopf factorizations of generators with a nonzero drift.

For a generator ``G``, drift ``v`` and killing rate ``c > 0`` the quadruple
``(Lambda+, Lambda-, G+, G-)`` is the unique solution of

    V^{-1} (G - c I) [[I, Lambda-], [Lambda+, I]]
        = [[I, Lambda-], [Lambda+, I]] diag(G+, -G-)

in sign-major order, with ``Lambda+`` (``|E-| x |E+|``) and ``Lambda-``
sub-stochastic and ``G+``, ``G-`` sub-generators.  Columns ``[I; Lambda+]``
span the invariant subspace of ``V^{-1}(G - cI)`` for the ``|E+|``
eigenvalues in the open left half-plane, which is what
:func:`classical_factorize` extracts with an ordered real Schur form.

:func:`block_factorize` exploits the upper block-bidiagonal structure of the
randomized generator and only ever factorizes ``|E|``-sized matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .chain import (
    DriftModel,
    RegimeSchedule,
    augmented_blocks,
    as_generator,
    lift_drift,
    sign_major_permutation,
    _check_rates,
)
from .exceptions import ModelError, ScalarRootError, SingularSystemError, SpectralSplitError

AXIS_TOL = 1e-9
COND_LIMIT = 1e13


@dataclass(frozen=True)
class SpectralSplit:
    """Eigenvalues of ``V^{-1}(G - cI)`` and orthonormal bases of the two
    invariant subspaces (``plus``: real part < 0, ``minus``: real part > 0)."""

    eigenvalues: np.ndarray
    plus_basis: np.ndarray
    plus_form: np.ndarray
    minus_basis: np.ndarray
    minus_form: np.ndarray


@dataclass(frozen=True)
class WHQuadruple:
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    g_plus: np.ndarray
    g_minus: np.ndarray
    killing: complex
    residual: float = field(default=np.nan, compare=False)


def sign_major_blocks(G, drift: DriftModel):
    """Return ``(A, B, C, D, v_plus, v_minus)``: the E+/E- sub-blocks of ``G``."""
    G = np.asarray(G)
    p = sign_major_permutation(drift)
    Gs = G[np.ix_(p, p)]
    npl = len(drift.plus_index)
    v = drift.v[p]
    return Gs[:npl, :npl], Gs[:npl, npl:], Gs[npl:, :npl], Gs[npl:, npl:], v[:npl], v[npl:]


def _drift_operator(G, drift, c):
    p = sign_major_permutation(drift)
    G = np.asarray(G)[np.ix_(p, p)]
    v = drift.v[p]
    return (G - c * np.eye(len(v))) / v[:, None]


def spectral_split(G, drift: DriftModel, c: float) -> SpectralSplit:
    """Ordered real-Schur split of ``V^{-1}(G - cI)`` into stable/unstable parts.

    Raises :class:`SpectralSplitError` if the eigenvalue counts do not match
    ``|E+|`` / ``|E-|`` or an eigenvalue sits within ``AXIS_TOL`` of the
    imaginary axis.
    """
    Q = _drift_operator(G, drift, c)
    npl = len(drift.plus_index)
    nmi = Q.shape[0] - npl
    eig = scipy.linalg.eigvals(Q)
    scale = max(1.0, np.abs(eig).max())
    close = np.abs(eig.real) < AXIS_TOL * scale
    if close.any():
        raise SpectralSplitError(f"eigenvalue(s) {eig[close]} too close to the imaginary axis")
    T1, U1, s1 = scipy.linalg.schur(Q, output="real", sort="lhp")
    T2, U2, s2 = scipy.linalg.schur(Q, output="real", sort="rhp")
    if s1 != npl or s2 != nmi:
        raise SpectralSplitError(
            f"expected {npl} stable and {nmi} unstable eigenvalues, found {s1} and {s2}"
        )
    return SpectralSplit(eig, U1[:, :npl], T1[:npl, :npl], U2[:, :nmi], T2[:nmi, :nmi])


def _solve_right(X, A, what):
    """``X @ inv(A)`` with a conditioning check."""
    if np.linalg.cond(A) > COND_LIMIT:
        raise SpectralSplitError(f"{what} basis block is singular (defective invariant subspace)")
    return np.linalg.solve(A.T, X.T).T


def classical_factorize(G, drift: DriftModel, c: float) -> WHQuadruple:
    """Wiener-Hopf quadruple of a single time-homogeneous generator.

    Parameters
    ----------
    G : array_like or GeneratorMatrix
        Conservative generator, rows/columns in ``drift.states`` order.
    drift : DriftModel
    c : float
        Killing (discount) rate, ``c > 0``.
    """
    if not np.isreal(c) or not c > 0:
        raise ModelError(f"killing rate must be a positive real, got {c}")
    G = as_generator(G).entries
    if G.shape != (drift.dim, drift.dim):
        raise ModelError(f"generator shape {G.shape} does not match {drift.dim} states")
    split = spectral_split(G, drift, c)
    npl = len(drift.plus_index)

    top, bot = split.plus_basis[:npl], split.plus_basis[npl:]
    lam_plus = _solve_right(bot, top, "plus")
    g_plus = top @ _solve_right(split.plus_form, top, "plus")

    top, bot = split.minus_basis[:npl], split.minus_basis[npl:]
    lam_minus = _solve_right(top, bot, "minus")
    g_minus = -bot @ _solve_right(split.minus_form, bot, "minus")

    quad = WHQuadruple(lam_plus, lam_minus, g_plus, g_minus, float(c))
    res = factorization_residual(G, drift, c, quad)
    return WHQuadruple(lam_plus, lam_minus, g_plus, g_minus, float(c), res)


def factorization_residual(G, drift: DriftModel, c, quad: WHQuadruple) -> float:
    """Max-norm of LHS - RHS of the factorization identity (sign-major)."""
    Q = _drift_operator(np.asarray(G), drift, c)
    npl = len(drift.plus_index)
    nmi = Q.shape[0] - npl
    L = np.block([[np.eye(npl), quad.lambda_minus], [quad.lambda_plus, np.eye(nmi)]])
    R = np.block(
        [[quad.g_plus, np.zeros((npl, nmi))], [np.zeros((nmi, npl)), -np.asarray(quad.g_minus)]]
    )
    return float(np.abs(Q @ L - L @ R).max())


def _quadratic_roots(a2, a1, a0):
    if a2 == 0:
        if a1 == 0:
            return np.array([])
        return np.array([-a0 / a1])
    disc = a1 * a1 - 4 * a2 * a0
    if disc < 0:
        return np.array([])
    # cancellation-free pair
    qq = -0.5 * (a1 + np.copysign(np.sqrt(disc), a1))
    if qq == 0:
        return np.array([0.0, 0.0])
    return np.array([qq / a2, a0 / qq])


def _unit_root(a2, a1, a0, what, tol=1e-12):
    roots = _quadratic_roots(a2, a1, a0)
    inside = [r for r in roots if -tol <= r <= 1 + tol]
    if len(inside) == 2 and abs(inside[0] - inside[1]) <= tol:
        inside = inside[:1]
    if len(inside) != 1:
        raise ScalarRootError(f"{what}: roots {roots} do not give a unique value in [0, 1]")
    return min(max(float(inside[0]), 0.0), 1.0)


def _scalar_rates(G, drift):
    if len(drift.plus_index) != 1 or len(drift.minus_index) != 1:
        raise ModelError("scalar factorization needs exactly one plus and one minus state")
    A, B, C, D, vp, vm = sign_major_blocks(G, drift)
    return float(B[0, 0]), float(C[0, 0]), float(vp[0]), float(vm[0])


def scalar_factorize(G, drift: DriftModel, c) -> WHQuadruple:
    """Closed-form quadruple when ``|E+| = |E-| = 1``.

    For real ``c > 0`` each crossing probability is the root in ``[0, 1]`` of
    a quadratic.  For complex ``c`` (transform continuation) the stable
    eigenvalue branch is continued analytically instead.
    """
    a, b, vp, vm = _scalar_rates(np.asarray(G, dtype=float), drift)
    if np.iscomplexobj(c) and np.imag(c) != 0:
        return _scalar_continued(a, b, vp, vm, complex(c))
    c = float(np.real(c))
    if not c > 0:
        raise ModelError(f"killing rate must be positive, got {c}")
    r = vm / vp
    lp = _unit_root(r * a, (b + c) - r * (a + c), -b, "Lambda+")
    s = vp / vm
    lm = _unit_root(s * b, (a + c) - s * (b + c), -a, "Lambda-")
    gp = (a * lp - (a + c)) / vp
    gm = ((b + c) - b * lm) / vm
    quad = WHQuadruple(np.array([[lp]]), np.array([[lm]]), np.array([[gp]]), np.array([[gm]]), c)
    res = factorization_residual(_sign_major_2x2(a, b), DriftModel((0, 1), (vp, vm)), c, quad)
    return WHQuadruple(quad.lambda_plus, quad.lambda_minus, quad.g_plus, quad.g_minus, c, res)


def _sign_major_2x2(a, b):
    return np.array([[-a, a], [b, -b]])


def _scalar_continued(a, b, vp, vm, kappa):
    q00, q01 = -(a + kappa) / vp, a / vp
    q10, q11 = b / vm, -(b + kappa) / vm
    tr = q00 + q11
    # discriminant is a quadratic in kappa with positive leading coefficient;
    # sqrt(L)(k-k1)^(1/2)(k-k2)^(1/2) is positive on the right real half-line
    # and cuts only between/left of the roots.
    alpha, beta = 1 / vp + 1 / vm, a / vp + b / vm
    lead = (1 / vp - 1 / vm) ** 2
    lin = 2 * alpha * beta - 4 * (a + b) / (vp * vm)
    k1, k2 = np.roots([lead, lin, beta * beta])
    sd = np.sqrt(lead) * np.sqrt(complex(kappa - k1)) * np.sqrt(complex(kappa - k2))
    lam, mu = (tr - sd) / 2, (tr + sd) / 2
    d1, d2 = q01, lam - q11
    lp = (lam - q00) / d1 if abs(d1) >= abs(d2) else q10 / d2
    d1, d2 = q10, mu - q00
    lm = (mu - q11) / d1 if abs(d1) >= abs(d2) else q01 / d2
    quad = WHQuadruple(
        np.array([[lp]]), np.array([[lm]]), np.array([[lam]]), np.array([[-mu]]), kappa
    )
    res = factorization_residual(_sign_major_2x2(a, b), DriftModel((0, 1), (vp, vm)), kappa, quad)
    return WHQuadruple(quad.lambda_plus, quad.lambda_minus, quad.g_plus, quad.g_minus, kappa, res)


@dataclass
class BlockFactorization:
    """Upper-triangular level blocks of the randomized chain's ``+`` factors.

    ``lambda_blocks[k, l]`` is the ``|E-| x |E+|`` block from level ``k`` to
    level ``l`` and ``g_blocks[k, l]`` the ``|E+| x |E+|`` block, ``k <= l``.
    """

    schedule: RegimeSchedule
    drift: DriftModel
    killing: float
    rates: tuple
    lambda_blocks: dict
    g_blocks: dict
    quadruple: Optional[WHQuadruple] = field(default=None, repr=False)

    @property
    def levels(self) -> int:
        return len(self.rates) + 1

    @property
    def shifted_killings(self) -> tuple:
        return tuple(q + self.killing for q in self.rates) + (self.killing,)

    def _assemble(self, blocks, rows, cols):
        lv = self.levels
        dtype = np.result_type(*blocks.values())
        out = np.zeros((lv * rows, lv * cols), dtype=dtype)
        for (k, l), blk in blocks.items():
            out[k * rows:(k + 1) * rows, l * cols:(l + 1) * cols] = blk
        return out

    def lambda_plus(self) -> np.ndarray:
        return self._assemble(self.lambda_blocks, len(self.drift.minus_index), len(self.drift.plus_index))

    def g_plus(self) -> np.ndarray:
        p = len(self.drift.plus_index)
        return self._assemble(self.g_blocks, p, p)

    def residual(self) -> float:
        """Residual of the ``+`` column of the augmented factorization identity."""
        return augmented_residual(self)


def augmented_residual(block: BlockFactorization) -> float:
    lv = block.levels
    dense = augmented_blocks(block.schedule.generators, block.rates)
    lifted = lift_drift(block.drift, lv)
    Q = _drift_operator(dense, lifted, block.killing)
    lam = block.lambda_plus()
    gp = block.g_plus()
    top = np.vstack([np.eye(gp.shape[0]), lam])
    return float(np.abs(Q @ top - top @ gp).max())


def _sylvester(L, Gd, rhs, where):
    """Solve ``L X - X Gd = rhs`` by vectorization."""
    m, p = rhs.shape
    K = np.kron(np.eye(p), L) - np.kron(Gd.T, np.eye(m))
    if not np.all(np.isfinite(K)) or np.linalg.cond(K) > COND_LIMIT:
        raise SingularSystemError(where, "linear system is singular")
    x = np.linalg.solve(K, rhs.reshape(-1, order="F"))
    return x.reshape((m, p), order="F")


def block_factorize(schedule: RegimeSchedule, drift: DriftModel, c: float, q) -> BlockFactorization:
    """Level-block recursion for the randomized chain's ``+`` factors.

    Step 1 fills the diagonal with single-generator factorizations at the
    shifted killing rates ``q_k + c`` (``c`` on the last level).  The
    off-diagonal blocks follow diagonal by diagonal: the ``G+`` block is
    eliminated through ``V+ G+_{k,k+r} = [r == 1] q I + B Lambda+_{k,k+r}``
    and the remaining equation is a Sylvester system for ``Lambda+_{k,k+r}``.

    Complex ``q`` is accepted only in the scalar case ``|E+| = |E-| = 1``.
    """
    schedule.check_drift(drift)
    q = _check_rates(q, schedule.n)
    if not c > 0:
        raise ModelError(f"killing rate must be positive, got {c}")
    complex_args = any(np.iscomplexobj(x) and np.imag(x) != 0 for x in q)
    scalar = len(drift.plus_index) == 1 and len(drift.minus_index) == 1
    if complex_args and not scalar:
        raise ModelError("complex transform arguments need |E+| = |E-| = 1")
    q = tuple(complex(x) for x in q) if complex_args else tuple(float(np.real(x)) for x in q)
    n = schedule.n
    kills = tuple(x + c for x in q) + (c,)

    lam, gp = {}, {}
    subs = []
    for k in range(n + 1):
        G = schedule.generators[k].entries
        quad = scalar_factorize(G, drift, kills[k]) if complex_args else classical_factorize(G, drift, kills[k])
        lam[k, k], gp[k, k] = quad.lambda_plus, quad.g_plus
        subs.append(sign_major_blocks(G, drift))

    for r in range(1, n + 1):
        for k in range(n - r + 1):
            _, B, _, D, vp, vm = subs[k]
            ip = np.eye(len(vp))
            L = (D - kills[k] * np.eye(len(vm))) / vm[:, None] - lam[k, k] @ (B / vp[:, None])
            rhs = q[k] * (-(lam[k + 1, k + r] / vm[:, None]))
            if r == 1:
                rhs = rhs + lam[k, k] @ (q[k] * ip / vp[:, None])
            for j in range(1, r):
                rhs = rhs + lam[k, k + j] @ gp[k + j, k + r]
            X = _sylvester(L, gp[k + r, k + r], rhs, (k, k + r))
            lam[k, k + r] = X
            gp[k, k + r] = ((q[k] * ip if r == 1 else 0) + B @ X) / vp[:, None]

    return BlockFactorization(schedule, drift, c, q, lam, gp)


def level_blocks(M, levels: int, rows: int, cols: int) -> dict:
    """Split a level-ordered matrix into ``{(k, l): block}`` for all ``k, l``."""
    return {
        (k, l): M[k * rows:(k + 1) * rows, l * cols:(l + 1) * cols]
        for k in range(levels)
        for l in range(levels)
    }


def direct_augmented_factorize(schedule: RegimeSchedule, drift: DriftModel, c: float, q) -> BlockFactorization:
    """Factorize the full randomized generator in one shot and re-partition.

    The full quadruple is kept on ``.quadruple`` so callers can inspect the
    (vanishing) lower-triangular blocks.
    """
    schedule.check_drift(drift)
    q = tuple(float(x) for x in _check_rates(q, schedule.n))
    lv = schedule.n + 1
    dense = augmented_blocks(schedule.generators, q)
    quad = classical_factorize(dense, lift_drift(drift, lv), c)
    p, m = len(drift.plus_index), len(drift.minus_index)
    lam = level_blocks(quad.lambda_plus, lv, m, p)
    gp = level_blocks(quad.g_plus, lv, p, p)
    upper = [(k, l) for k in range(lv) for l in range(k, lv)]
    return BlockFactorization(
        schedule, drift, c, q,
        {key: lam[key] for key in upper},
        {key: gp[key] for key in upper},
        quadruple=quad,
    )
