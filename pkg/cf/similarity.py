from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
import scipy.sparse as sp

from dataset.dataset import CenteredMatrix
from src.manifest import Axis

# Scores closer than this many decimals count as ties, broken by ascending id,
# so the ordering does not depend on the summation order of the dot products.
SCORE_DECIMALS = 12


@dataclass(frozen=True)
class NeighborList:
    """Most similar users (or items) to `target`, best first, ties by ascending id."""
    target: int
    axis: Axis
    neighbors: tuple[tuple[int, float], ...]

    def __len__(self):
        return len(self.neighbors)

    def __iter__(self) -> Iterator[tuple[int, float]]:
        return iter(self.neighbors)

    @property
    def ids(self) -> list[int]:
        return [entity for entity, _ in self.neighbors]

    @property
    def scores(self) -> list[float]:
        return [score for _, score in self.neighbors]


def _dense(vector) -> np.ndarray:
    if sp.issparse(vector):
        return vector.toarray().ravel().astype(np.float64)
    return np.asarray(vector, dtype=np.float64).ravel()


def centered_cosine(a, b) -> float:
    """
    a.b / (|a| |b|) for two already-centered vectors, dense or sparse.

    Unobserved cells are zeros. Returns 0.0 when either vector has zero
    norm (a constant rater centers to all zeros).
    """
    a = _dense(a)
    b = _dense(b)
    if a.shape != b.shape:
        raise ValueError(f'vector dimensions differ: {a.shape[0]} vs {b.shape[0]}')
    norm_a = np.sqrt(np.dot(a, a))
    norm_b = np.sqrt(np.dot(b, b))
    if norm_a == 0 or norm_b == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


class SimilarityIndex:
    """
    Centered-cosine scoring of one user (or item) against all others.

    Built once per centered matrix and axis: holds the entity vectors as CSR
    rows and their norms, so a full scoring pass is one sparse mat-vec.
    """

    def __init__(self, centered: CenteredMatrix, axis: Optional[Axis] = None):
        self.centered = centered
        self.axis = Axis(axis) if axis is not None else centered.axis
        if self.axis == centered.axis:
            self.vectors = centered.vectors
        else:
            self.vectors = centered.values if self.axis == Axis.USER else centered.values.T.tocsr()
        self.norms = np.sqrt(np.asarray(self.vectors.multiply(self.vectors).sum(axis=1)).ravel())
        source = centered.source
        self.ids = source.user_ids if self.axis == Axis.USER else source.item_ids

    def index_of(self, entity_id: int) -> int:
        source = self.centered.source
        return source.user_index(entity_id) if self.axis == Axis.USER else source.item_index(entity_id)

    def scores(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """(candidate indices, scores) over every other entity with nonzero norm."""
        norm_t = self.norms[index]
        if norm_t == 0:
            return np.empty(0, dtype=np.int64), np.empty(0)
        target = self.vectors[index].toarray().ravel()
        dots = self.vectors @ target
        valid = self.norms > 0
        valid[index] = False
        candidates = np.flatnonzero(valid)
        scores = dots[candidates] / (self.norms[candidates] * norm_t)
        return candidates, np.clip(scores, -1.0, 1.0)

    def neighbors(self, index: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        """The k best (indices, scores), descending score then ascending index."""
        if k < 1:
            raise ValueError(f'k must be >= 1, got {k}')
        candidates, scores = self.scores(index)
        order = np.lexsort((candidates, -np.round(scores, SCORE_DECIMALS)))[:k]
        return candidates[order], scores[order]

    def neighbor_list(self, entity_id: int, k: int) -> NeighborList:
        index = self.index_of(entity_id)
        members, scores = self.neighbors(index, k)
        return NeighborList(
            target=int(entity_id),
            axis=self.axis,
            neighbors=tuple((int(self.ids[m]), float(s)) for m, s in zip(members, scores)),
        )


def top_k_neighbors(c: CenteredMatrix, target: int, k: int, axis: Optional[Axis] = None) -> NeighborList:
    """
    K most similar rows (axis=user) or columns (axis=item) of `c` to `target`.

    Zero-norm candidates are left out, and so is the target itself. A
    zero-norm target has no defined similarity to anyone and gets an empty
    list. Fewer than k neighbours are returned when candidates run out.
    """
    return SimilarityIndex(c, axis).neighbor_list(target, k)
