"""Transition matrices, stationary distributions, and payoff functionals.

The state of a memory-``n`` game is the joint history of the last ``n``
rounds.  Each row of the transition matrix has exactly four nonzero entries:
at history ``i`` the next state is obtained by dropping the oldest round and
appending the new joint action, so the nonzeros of row ``i`` sit at columns
``4*(i mod 2^(2n-2)) + {0,1,2,3}`` and factor as

    (p_i * qb, p_i * (1-qb), (1-p_i) * qb, (1-p_i) * (1-qb))

where ``qb`` is the co-player's cooperation probability at the mirrored
history ``bar(i)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    PayoffVector,
    StrategyVector,
    bar_index,
    bar_permutation,
    n_states,
)
from .errors import ConvergenceError, DegeneracyError

INTERIOR_THRESHOLD = 1e-12
POWER_MAX_ITER = 1_000_000


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic 2^(2n) x 2^(2n) matrix; dense storage, 4 nonzeros per row."""

    n: int
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        size = n_states(self.n)
        if entries.shape != (size, size):
            raise ValueError(f"expected {size}x{size} matrix for n={self.n}")
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def quadruple_columns(self, row: int) -> np.ndarray:
        """Columns allowed to be nonzero in ``row``."""
        start = 4 * (row % (self.size // 4))
        return np.arange(start, start + 4)

    def sparse_rows(self):
        """Per-row list of (column, value) pairs at the quadruple positions."""
        rows = []
        for i in range(self.size):
            cols = self.quadruple_columns(i)
            rows.append([[int(c), float(self.entries[i, c])] for c in cols])
        return rows


def _quadruples(p: StrategyVector, q: StrategyVector) -> np.ndarray:
    """(size, 4) array of the row quadruples for the pair (p, q)."""
    pi = p.probs
    qb = q.probs[bar_permutation(p.n)]
    return np.stack(
        [pi * qb, pi * (1 - qb), (1 - pi) * qb, (1 - pi) * (1 - qb)], axis=1
    )


def build_transition_matrix(p: StrategyVector, q: StrategyVector) -> TransitionMatrix:
    """Direct per-entry construction from the quadruple rule."""
    if p.n != q.n:
        raise ValueError(f"memory orders differ: {p.n} vs {q.n}")
    size = n_states(p.n)
    quad = _quadruples(p, q)
    entries = np.zeros((size, size))
    rows = np.arange(size)
    start = 4 * (rows % (size // 4))
    for k in range(4):
        entries[rows, start + k] = quad[:, k]
    return TransitionMatrix(p.n, entries)


def build_transition_matrix_recursive(
    p: StrategyVector, q: StrategyVector
) -> TransitionMatrix:
    """Block-recursive construction, used as the structural test oracle.

    The memory-``n`` matrix is assembled from four memory-``(n-1)`` matrices,
    one per prefix round CC/CD/DC/DD: each is cut into four horizontal strips
    which are placed block-diagonally, with the strip index selecting the
    block column.  The co-player's sub-strategy for prefix ``t`` is the slice
    at the mirrored prefix ``bar(t)``.
    """
    if p.n != q.n:
        raise ValueError(f"memory orders differ: {p.n} vs {q.n}")
    n = p.n
    if n == 1:
        return build_transition_matrix(p, q)
    sub = n_states(n - 1)
    strip = sub // 4
    size = n_states(n)
    entries = np.zeros((size, size))
    prefix_bar = [bar_index(t, 1) for t in range(4)]
    for t in range(4):
        p_slice = StrategyVector(n - 1, p.probs[t * sub : (t + 1) * sub])
        tb = prefix_bar[t]
        q_slice = StrategyVector(n - 1, q.probs[tb * sub : (tb + 1) * sub])
        block = build_transition_matrix_recursive(p_slice, q_slice).entries
        for s in range(4):
            row0 = (4 * t + s) * strip
            col0 = s * sub
            entries[row0 : row0 + strip, col0 : col0 + sub] = block[
                s * strip : (s + 1) * strip, :
            ]
    return TransitionMatrix(n, entries)


@dataclass(frozen=True)
class StationaryDistribution:
    n: int
    weights: np.ndarray

    def residual(self, matrix: TransitionMatrix) -> float:
        """Max-norm defect of the left-eigenvector equation."""
        return float(
            np.abs(self.weights @ matrix.entries - self.weights).max()
        )


def stationary_distribution(
    matrix: TransitionMatrix, method: str = "linear-solve", tol: float = 1e-12
) -> StationaryDistribution:
    """Left unit eigenvector of the transition matrix, normalized to sum 1.

    ``linear-solve`` replaces one equation of (M^T - I) nu = 0 by the
    normalization; ``power-iteration`` starts uniform and multiplies until
    the residual drops below ``tol``.
    """
    size = matrix.size
    if method == "linear-solve":
        a = matrix.entries.T - np.eye(size)
        a[-1, :] = 1.0
        b = np.zeros(size)
        b[-1] = 1.0
        try:
            nu = np.linalg.solve(a, b)
        except np.linalg.LinAlgError as exc:
            raise DegeneracyError(
                "singular stationary system; strategies are degenerate"
            ) from exc
        return StationaryDistribution(matrix.n, nu)
    if method == "power-iteration":
        nu = np.full(size, 1.0 / size)
        mt = matrix.entries.T
        for _ in range(POWER_MAX_ITER):
            nxt = mt @ nu
            residual = float(np.abs(nxt - nu).max())
            nu = nxt / nxt.sum()
            if residual < tol:
                return StationaryDistribution(matrix.n, nu)
        raise ConvergenceError(
            f"power iteration did not reach tol={tol} "
            f"within {POWER_MAX_ITER} iterations"
        )
    raise ValueError(f"unknown method {method!r}")


def _require_interior(p: StrategyVector, q: StrategyVector, threshold: float):
    dist = min(p.boundary_distance(), q.boundary_distance())
    if dist < threshold:
        raise DegeneracyError(
            f"strategies within {dist:.2e} of the cube boundary; "
            "interiorize (clamp) them or pass allow_boundary=True"
        )


def _det_ratio(numerator: np.ndarray, denominator: np.ndarray) -> float:
    """det(numerator)/det(denominator) via sign and log-magnitude."""
    sign_n, log_n = np.linalg.slogdet(numerator)
    sign_d, log_d = np.linalg.slogdet(denominator)
    if sign_d == 0.0:
        raise DegeneracyError("denominator determinant vanished")
    if sign_n == 0.0:
        return 0.0
    return float(sign_n * sign_d * np.exp(log_n - log_d))


def _replaced_last_column(
    matrix: TransitionMatrix, column: np.ndarray
) -> np.ndarray:
    out = matrix.entries - np.eye(matrix.size)
    out[:, -1] = column
    return out


def payoff_from_column(
    p: StrategyVector, q: StrategyVector, column: np.ndarray
) -> float:
    """Determinant-quotient payoff with an arbitrary final column."""
    matrix = build_transition_matrix(p, q)
    numerator = _replaced_last_column(matrix, column)
    denominator = _replaced_last_column(matrix, np.ones(matrix.size))
    return _det_ratio(numerator, denominator)


def payoff(
    p: StrategyVector,
    q: StrategyVector,
    f: PayoffVector,
    method: str = "determinant",
    allow_boundary: bool = False,
    tol: float = 1e-12,
) -> float:
    """Long-run average payoff of the focal player.

    ``determinant`` computes the quotient of two determinants obtained by
    replacing the last column of (M - I) with the payoff vector and with the
    all-ones vector; ``stationary`` computes the inner product of the
    invariant distribution with the payoff vector.  ``allow_boundary``
    bypasses the interiority gate and always evaluates through power
    iteration; uniqueness of the result is then the caller's concern.
    """
    if not (p.n == q.n == f.n):
        raise ValueError("memory orders of p, q, f must agree")
    if allow_boundary:
        matrix = build_transition_matrix(p, q)
        nu = stationary_distribution(matrix, method="power-iteration", tol=tol)
        return float(nu.weights @ f.values)
    _require_interior(p, q, INTERIOR_THRESHOLD)
    if method == "determinant":
        return payoff_from_column(p, q, f.values)
    if method == "stationary":
        matrix = build_transition_matrix(p, q)
        nu = stationary_distribution(matrix, method="linear-solve", tol=tol)
        return float(nu.weights @ f.values)
    raise ValueError(f"unknown method {method!r}")


def swap_column(f: PayoffVector) -> np.ndarray:
    """Payoff vector read through the player-swap permutation."""
    perm = bar_permutation(f.n)
    return f.values[perm]


def decompose_payoff(
    p: StrategyVector, q: StrategyVector, f: PayoffVector
) -> tuple[float, float]:
    """Split the payoff into player-symmetric and anti-symmetric parts.

    Returns (A_s, A_a) where A_s(p,q) = A_s(q,p), A_a(p,q) = -A_a(q,p) and
    A_s + A_a equals the payoff; the parts only differ in the final column
    of the determinant: (f + f∘bar)/2 versus (f - f∘bar)/2.
    """
    _require_interior(p, q, INTERIOR_THRESHOLD)
    swapped = swap_column(f)
    a_s = payoff_from_column(p, q, 0.5 * (f.values + swapped))
    a_a = payoff_from_column(p, q, 0.5 * (f.values - swapped))
    return a_s, a_a


def reactive_payoff(
    p1: float, p2: float, q1: float, q2: float, b: float, c: float
) -> float:
    """Closed-form donation-game payoff when both players are reactive.

    ``p1``/``q1`` are cooperation probabilities after the co-player
    cooperated, ``p2``/``q2`` after a defection.
    """
    for name, value in (("p1", p1), ("p2", p2), ("q1", q1), ("q2", q2)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name}={value} outside [0, 1]")
    denominator = 1.0 - (p1 - p2) * (q1 - q2)
    if abs(denominator) < 1e-14:
        raise DegeneracyError("reactive payoff undefined: (p1-p2)(q1-q2) = 1")
    numerator = b * ((q1 - q2) * p2 + q2) - c * (p2 + (p1 - p2) * q2)
    return numerator / denominator
