"""The eight admissible index permutations and their conjugation identities.

Each permutation is generated by up to three involutions on history indices:
flipping the focal player's action labels, flipping the co-player's labels,
and swapping the two players' roles within every round.  Flips are applied
first, then the swap.  Stored as index arrays ``perm`` with the convention
that the corresponding permutation matrix J has ``J[i, perm[i]] = 1``, so
``(J v)[i] = v[perm[i]]`` and conjugation ``J M J^T`` relabels both axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations as all_permutations

import numpy as np

from .core import (
    PayoffVector,
    StrategyVector,
    _focal_mask,
    _k_recursion,
    _opponent_mask,
    bar_index,
    n_states,
)
from .markov import TransitionMatrix, build_transition_matrix

KINDS = ("J1", "J2", "J3", "J4", "J5", "J6", "J7", "J8")

# (flip_focal, flip_opponent, swap_players) per kind.
GENERATORS = {
    "J1": (False, False, False),
    "J2": (False, False, True),
    "J3": (False, True, False),
    "J4": (True, False, True),
    "J5": (False, True, True),
    "J6": (True, False, False),
    "J7": (True, True, True),
    "J8": (True, True, False),
}

# Index maps at memory 1, row -> column of the single 1 in each row.
_BASE_MAPS = {
    "J1": (0, 1, 2, 3),
    "J2": (0, 2, 1, 3),
    "J3": (1, 0, 3, 2),
    "J4": (1, 3, 0, 2),
    "J5": (2, 0, 3, 1),
    "J6": (2, 3, 0, 1),
    "J7": (3, 1, 2, 0),
    "J8": (3, 2, 1, 0),
}


@dataclass(frozen=True)
class SymmetryPermutation:
    n: int
    kind: str
    perm: np.ndarray
    generators: tuple

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=int)
        perm.flags.writeable = False
        object.__setattr__(self, "perm", perm)

    def apply(self, vector: np.ndarray) -> np.ndarray:
        """Multiply the permutation matrix into a vector."""
        return np.asarray(vector)[self.perm]

    def matrix(self) -> np.ndarray:
        """Dense 0/1 matrix; only for inspection, never used internally."""
        size = self.perm.shape[0]
        out = np.zeros((size, size))
        out[np.arange(size), self.perm] = 1.0
        return out


def build_j(kind: str, n: int) -> SymmetryPermutation:
    """Construct one of the eight admissible permutations at memory ``n``."""
    if kind not in GENERATORS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")
    if n < 1:
        raise ValueError("memory order must be >= 1")
    flip_focal, flip_opponent, swap = GENERATORS[kind]
    mask = 0
    if flip_focal:
        mask |= _focal_mask(n)
    if flip_opponent:
        mask |= _opponent_mask(n)
    idx = np.arange(n_states(n))
    idx = idx ^ mask
    if swap:
        idx = np.array([bar_index(int(i), n) for i in idx])
    return SymmetryPermutation(n, kind, idx, GENERATORS[kind])


def build_j_recursive(kind: str, n: int) -> SymmetryPermutation:
    """Block-recursive construction (test oracle for :func:`build_j`).

    The memory-``n`` matrix replaces each 1 of the memory-1 matrix with a
    copy of the memory-``(n-1)`` matrix and each 0 with a zero block; on
    index maps this is digit-wise application of the base map.
    """
    base = _BASE_MAPS[kind]
    perm = np.array(base, dtype=int)
    for level in range(2, n + 1):
        sub = n_states(level - 1)
        size = 4 * sub
        new = np.empty(size, dtype=int)
        for prefix in range(4):
            block = slice(prefix * sub, (prefix + 1) * sub)
            new[block] = base[prefix] * sub + perm
        perm = new
    return SymmetryPermutation(n, kind, perm, GENERATORS[kind])


def full_group(n: int) -> dict:
    return {kind: build_j(kind, n) for kind in KINDS}


def compose(a: SymmetryPermutation, b: SymmetryPermutation) -> np.ndarray:
    """Index map of the matrix product a . b."""
    return b.perm[a.perm]


def conjugate_matrix(
    matrix: TransitionMatrix, j: SymmetryPermutation
) -> TransitionMatrix:
    """J M J^T as a pure relabeling of rows and columns (no arithmetic)."""
    if n_states(j.n) != matrix.size:
        raise ValueError("permutation and matrix dimensions differ")
    entries = matrix.entries[np.ix_(j.perm, j.perm)]
    return TransitionMatrix(matrix.n, entries)


def payoff_vector_reflection_residual(f: PayoffVector) -> float:
    """Max-norm defect of -f + K 1 = J8 f.

    Vanishes for payoff vectors built under equal gains from switching; for
    other payoffs the returned residual is positive and reports how far the
    reflection identity fails (K still taken from the R+P recursion).
    """
    k = _k_recursion(f.params, f.n)
    reflected = f.values[::-1]
    return float(np.abs(-f.values + k - reflected).max())


def _quadruple_residuals(entries: np.ndarray) -> tuple[float, float, float]:
    """(worst negative entry, worst row-sum defect, worst rank-1 defect)."""
    size = entries.shape[0]
    rows = np.arange(size)
    start = 4 * (rows % (size // 4))
    quads = np.stack([entries[rows, start + k] for k in range(4)], axis=1)
    neg = float(max(0.0, -quads.min()))
    row_sum = float(np.abs(quads.sum(axis=1) - 1.0).max())
    rank1 = float(np.abs(quads[:, 0] * quads[:, 3] - quads[:, 1] * quads[:, 2]).max())
    return neg, row_sum, rank1


def _has_quadruple_sparsity(entries: np.ndarray) -> bool:
    size = entries.shape[0]
    mask = np.zeros_like(entries, dtype=bool)
    rows = np.arange(size)
    start = 4 * (rows % (size // 4))
    for k in range(4):
        mask[rows, start + k] = True
    return not np.any(entries[~mask] != 0.0)


def check_admissible(
    perm: np.ndarray,
    n: int,
    trials: int = 5,
    rng: np.random.Generator | None = None,
    rank1_tol: float = 1e-10,
) -> bool:
    """Test whether conjugating by ``perm`` preserves transition structure.

    For ``trials`` random interior strategy pairs the conjugated matrix must
    keep the four-per-row sparsity pattern, and every row quadruple must be
    nonnegative, sum to one, and factor as (yz, y(1-z), (1-y)z, (1-y)(1-z)),
    which for a nonnegative unit-sum quadruple is equivalent to the 2x2
    reshape having rank 1.
    """
    perm = np.asarray(perm, dtype=int)
    size = n_states(n)
    if sorted(perm.tolist()) != list(range(size)):
        raise ValueError("perm is not a bijection on the index set")
    if rng is None:
        rng = np.random.default_rng(0)
    for _ in range(trials):
        p = StrategyVector(n, rng.uniform(0.05, 0.95, size))
        q = StrategyVector(n, rng.uniform(0.05, 0.95, size))
        m = build_transition_matrix(p, q).entries
        conj = m[np.ix_(perm, perm)]
        if not _has_quadruple_sparsity(conj):
            return False
        neg, row_sum, rank1 = _quadruple_residuals(conj)
        if neg > 0.0 or row_sum > 1e-12 or rank1 > rank1_tol:
            return False
    return True


def admissible_set_bruteforce_memory1(
    trials: int = 5, rng: np.random.Generator | None = None
):
    """All permutations of the 4 memory-1 states that pass admissibility."""
    if rng is None:
        rng = np.random.default_rng(0)
    passing = []
    for perm in all_permutations(range(4)):
        if check_admissible(np.array(perm), 1, trials=trials, rng=rng):
            passing.append(tuple(perm))
    return passing


def j2_eigenvalue_multiplicities(n: int) -> tuple[int, int]:
    """Eigenvalue multiplicities (-1 count, +1 count) of the player swap.

    Computed from the cycle structure of the involution: every 2-cycle
    contributes one -1 eigenvector, every fixed point a +1 eigenvector.
    """
    size = n_states(n)
    fixed = sum(1 for i in range(size) if bar_index(i, n) == i)
    minus = (size - fixed) // 2
    return minus, size - minus
