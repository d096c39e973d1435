"""
Finite-dimensional structure of a coupling pair ``(A, B)``: the difference
matrix ``D``, the reduced matrix ``Ã`` with ``DA = ÃD``, Kalman ranks and the
H1 / H2 / Neither classification that decides whether (and how) the coupled
system can be synchronized.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from syncctl.exceptions import InvalidDimension, RowConditionViolated

logger = logging.getLogger(__name__)

#: relative tolerance for equality of row sums
ROW_TOL: float = 1e-10
#: singular values above ``RANK_TOL * sigma_max`` count toward the rank
RANK_TOL: float = 1e-10
#: absolute floor below which a block is treated as zero
RANK_FLOOR: float = 1e-14
#: a decisive singular value within this factor of the cutoff is borderline
BORDERLINE_FACTOR: float = 10.0

MatrixLike = Union[np.ndarray, Sequence[Sequence[float]]]


class Hypothesis(Enum):
    """Which synchronization hypothesis a coupling pair satisfies."""

    #: equal row sums and rank(DB, DAB, ..., DA^{n-2}B) = n - 1
    H1 = "H1"
    #: unequal row sums and rank(B, AB, ..., A^{n-1}B) = n
    H2 = "H2"
    #: not synchronizable
    NEITHER = "Neither"

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class CouplingPair:
    """The coupling matrix ``A`` (n×n) and control matrix ``B`` (n×m)."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidDimension(f"A must be square, got shape {A.shape}")
        if A.shape[0] < 2:
            raise InvalidDimension(f"need at least 2 components, got n={A.shape[0]}")
        if B.ndim != 2 or B.shape[0] != A.shape[0] or B.shape[1] < 1:
            raise InvalidDimension(
                f"B must have shape ({A.shape[0]}, m) with m >= 1, got {B.shape}"
            )
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise InvalidDimension("A and B must have finite entries")
        A.setflags(write=False)
        B.setflags(write=False)
        # frozen dataclass; bypass to store normalized copies
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class SyncStructure:
    """Result of :func:`classify`."""

    pair: CouplingPair
    #: difference matrix, (n-1)×n
    D: np.ndarray
    hypothesis: Hypothesis
    #: row sums of A
    row_sums: np.ndarray
    #: computed Kalman rank of the block that decides the hypothesis
    rank_value: int
    #: rank required for the hypothesis to hold (n-1 under the row condition, n otherwise)
    rank_target: int
    #: reduced matrix Ã, present iff the row condition holds
    A_reduced: Optional[np.ndarray] = None
    #: rank of (DB, ÃDB, ..., Ã^{n-2}DB), present iff the row condition holds
    reduced_rank: Optional[int] = None
    #: decisive singular value relative to the cutoff (>= 1 is comfortable)
    rank_margin: float = field(default=float("inf"))

    @property
    def row_condition(self) -> bool:
        return self.A_reduced is not None

    @property
    def synchronizable(self) -> bool:
        return self.hypothesis is not Hypothesis.NEITHER

    @property
    def borderline(self) -> bool:
        """True when the rank decision was made within a factor of 10 of the cutoff."""
        return self.rank_margin < BORDERLINE_FACTOR

    def to_dict(self) -> dict:
        return {
            "hypothesis": str(self.hypothesis),
            "n": self.pair.n,
            "m": self.pair.m,
            "row_condition": self.row_condition,
            "row_sums": self.row_sums.tolist(),
            "rank": self.rank_value,
            "rank_target": self.rank_target,
            "reduced_rank": self.reduced_rank,
            "A_reduced": None if self.A_reduced is None else self.A_reduced.tolist(),
            "rank_margin": self.rank_margin,
            "borderline": self.borderline,
        }


def difference_matrix(n: int) -> np.ndarray:
    """(n-1)×n matrix with 1 on the diagonal and -1 on the superdiagonal;
    ``D @ y == 0`` exactly when all entries of ``y`` are equal."""
    if n < 2:
        raise InvalidDimension(f"difference matrix needs n >= 2, got {n}")
    return np.eye(n - 1, n) - np.eye(n - 1, n, k=1)


def row_condition(A: MatrixLike, tol: float = ROW_TOL) -> bool:
    """Check whether all row sums of ``A`` agree within ``tol`` (relative)."""
    sums = np.asarray(A, dtype=float).sum(axis=1)
    spread = sums.max() - sums.min()
    return bool(spread <= tol * (1 + np.abs(sums).max()))


def _right_inverse(n: int) -> np.ndarray:
    # partial sums: D @ R == I_{n-1}
    return np.triu(np.ones((n, n - 1)))


def reduced_matrix(A: MatrixLike, tol: float = ROW_TOL) -> np.ndarray:
    """The unique ``Ã`` with ``DA = ÃD``; only exists when the row sums
    of ``A`` are equal."""
    A = np.asarray(A, dtype=float)
    if not row_condition(A, tol):
        raise RowConditionViolated(
            f"row sums differ ({A.sum(axis=1).tolist()}); no reduced matrix exists"
        )
    n = A.shape[0]
    D = difference_matrix(n)
    A_reduced = D @ A @ _right_inverse(n)
    residual = np.abs(D @ A - A_reduced @ D).max()
    if residual > 1e-12 * (1 + np.abs(A).max()):
        # row sums equal only up to the tolerance
        logger.warning("reduced matrix residual %.3e exceeds 1e-12", residual)
    return A_reduced


def kalman_block(F: MatrixLike, G: MatrixLike) -> np.ndarray:
    """Horizontally stacked block ``(G, FG, ..., F^{k-1}G)``."""
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G.reshape(-1, 1)
    k = F.shape[0]
    if F.shape != (k, k) or G.shape[0] != k:
        raise InvalidDimension(f"incompatible shapes {F.shape} and {G.shape}")
    blocks = [G]
    for _ in range(1, k):
        blocks.append(F @ blocks[-1])
    return np.hstack(blocks)


def _rank_and_margin(
    block: np.ndarray, tol: float, floor: float
) -> "tuple[int, float]":
    sigma = scipy.linalg.svdvals(block) if block.size else np.zeros(0)
    if sigma.size == 0 or sigma[0] <= floor:
        return 0, float("inf")
    cutoff = tol * sigma[0]
    rank = int(np.count_nonzero(sigma > cutoff))
    # distance of the decisive singular values from the cutoff
    margins = [sigma[rank - 1] / cutoff]
    if rank < sigma.size and sigma[rank] > 0:
        margins.append(cutoff / sigma[rank])
    return rank, float(min(margins))


def kalman_rank(
    F: MatrixLike, G: MatrixLike, tol: float = RANK_TOL, floor: float = RANK_FLOOR
) -> int:
    """Rank of the Kalman block ``(G, FG, ..., F^{k-1}G)``: the number of
    singular values above ``tol * sigma_max`` (0 if the block is below
    ``floor``)."""
    rank, _ = _rank_and_margin(kalman_block(F, G), tol, floor)
    return rank


def classify(
    pair: CouplingPair, tol: float = RANK_TOL, row_tol: float = ROW_TOL
) -> SyncStructure:
    """Decide which of H1, H2 or Neither the pair satisfies.

    The row condition is checked first; with equal row sums only the
    reduced rank condition is tested, otherwise only the full one.
    """
    n = pair.n
    D = difference_matrix(n)
    sums = pair.A.sum(axis=1)

    if row_condition(pair.A, row_tol):
        A_reduced = reduced_matrix(pair.A, row_tol)
        DB = D @ pair.B
        # (DB, DAB, ..., DA^{n-2}B): D applied to the first n-1 blocks of (B, AB, ...)
        block = D @ kalman_block(pair.A, pair.B)[:, : (n - 1) * pair.m]
        rank, margin = _rank_and_margin(block, tol, RANK_FLOOR)
        reduced_rank = kalman_rank(A_reduced, DB, tol)
        if reduced_rank != rank:
            logger.warning(
                "rank of (DB, DAB, ...) is %d but rank of (DB, ÃDB, ...) is %d",
                rank,
                reduced_rank,
            )
        hypothesis = Hypothesis.H1 if rank == n - 1 else Hypothesis.NEITHER
        structure = SyncStructure(
            pair=pair,
            D=D,
            hypothesis=hypothesis,
            row_sums=sums,
            rank_value=rank,
            rank_target=n - 1,
            A_reduced=A_reduced,
            reduced_rank=reduced_rank,
            rank_margin=margin,
        )
    else:
        rank, margin = _rank_and_margin(
            kalman_block(pair.A, pair.B), tol, RANK_FLOOR
        )
        hypothesis = Hypothesis.H2 if rank == n else Hypothesis.NEITHER
        structure = SyncStructure(
            pair=pair,
            D=D,
            hypothesis=hypothesis,
            row_sums=sums,
            rank_value=rank,
            rank_target=n,
            rank_margin=margin,
        )

    if structure.borderline:
        logger.warning(
            "rank decision is borderline (margin %.2f); result may depend on the tolerance",
            structure.rank_margin,
        )
    logger.debug(
        "classified pair: %s (rank %d of %d)", hypothesis, rank, structure.rank_target
    )
    return structure
