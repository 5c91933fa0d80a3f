"""Random k-hypermatchings and their matrix encodings over Z_q.

Edges are ordered tuples of 0-based vertices; the last entry of each tuple is
the edge's center. Files use 1-based vertices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class Hypermatching:
    n: int
    k: int
    edges: np.ndarray

    def __post_init__(self):
        e = np.array(self.edges, dtype=np.int64, copy=True).reshape(-1, self.k)
        if self.k < 1:
            raise ValueError("k must be positive")
        if e.size and (e.min() < 0 or e.max() >= self.n):
            raise ValueError("vertex out of range")
        if len(np.unique(e)) != e.size:
            raise ValueError("edges must be disjoint with distinct entries")
        e.flags.writeable = False
        object.__setattr__(self, "edges", e)

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    @property
    def centers(self) -> np.ndarray:
        return self.edges[:, -1]

    @property
    def vertices(self) -> np.ndarray:
        return self.edges.ravel()

    def with_centers(self, centers: Sequence[int]) -> "Hypermatching":
        """Rotate each edge tuple so that the requested center is last."""
        centers = list(centers)
        if len(centers) != self.m:
            raise ValueError("need one center per edge")
        rows = []
        for edge, c in zip(self.edges, centers):
            hits = np.flatnonzero(edge == c)
            if hits.size != 1:
                raise ValueError(f"center {c} not in edge {tuple(edge)}")
            j = int(hits[0])
            rows.append(np.roll(edge, self.k - 1 - j))
        return Hypermatching(self.n, self.k, np.array(rows, dtype=np.int64).reshape(-1, self.k))

    def edge_sets(self) -> frozenset:
        return frozenset(frozenset(int(v) for v in e) for e in self.edges)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "edges": [[int(v) + 1 for v in e] for e in self.edges],
            "centers": [int(c) + 1 for c in self.centers],
        }

    @staticmethod
    def from_json(obj: dict) -> "Hypermatching":
        k = int(obj["k"])
        edges = np.array(obj["edges"], dtype=np.int64).reshape(-1, k) - 1
        M = Hypermatching(int(obj["n"]), k, edges)
        if obj.get("centers") is not None:
            M = M.with_centers([c - 1 for c in obj["centers"]])
        return M


def sample_hypermatching(n: int, k: int, m: int, rng: np.random.Generator) -> Hypermatching:
    """Draw km distinct vertices in uniformly random order and cut them into edges."""
    if k * m > n:
        raise ValueError(f"k*m = {k * m} exceeds n = {n}")
    order = rng.permutation(n)[: k * m]
    return Hypermatching(n, k, order.reshape(m, k))


@dataclass(frozen=True, eq=False)
class EncodingTriple:
    q: int
    A: np.ndarray
    A_c: np.ndarray
    A_tilde: np.ndarray


def incidence_matrix(M: Hypermatching) -> np.ndarray:
    """The km x n matrix with a single 1 in row k*i + l at column (e_i)_l."""
    A = np.zeros((M.k * M.m, M.n), dtype=np.int64)
    A[np.arange(M.k * M.m), M.edges.ravel()] = 1
    return A


def folded_matrix(M: Hypermatching, q: int) -> np.ndarray:
    """Rows ``x[(e_i)_l] - x[c_i]`` for l < k, entries reduced mod q."""
    r = M.k - 1
    A = np.zeros((r * M.m, M.n), dtype=np.int64)
    for i, edge in enumerate(M.edges):
        for l in range(r):
            A[r * i + l, edge[l]] += 1
            A[r * i + l, edge[-1]] -= 1
    return A % q


def projection_matrix(M: Hypermatching, q: int) -> np.ndarray:
    """The folded matrix with every center column zeroed."""
    A = folded_matrix(M, q)
    A[:, M.centers] = 0
    return A


def encode(M: Hypermatching, q: int, centers: Sequence[int] | None = None) -> EncodingTriple:
    if centers is not None:
        M = M.with_centers(centers)
    return EncodingTriple(q, incidence_matrix(M), folded_matrix(M, q), projection_matrix(M, q))


def recentering_matrix(M: Hypermatching, centers: Sequence[int], q: int):
    """Return ``(Q, M2)`` with ``folded_matrix(M2) == Q @ folded_matrix(M) mod q``.

    ``M2`` is ``M`` re-centered at ``centers``. Q is block diagonal; the block
    for one edge writes each new difference as old difference of the vertex
    minus old difference of the new center (the old center's own difference
    is zero and drops out).
    """
    M2 = M.with_centers(centers)
    r = M.k - 1
    Q = np.zeros((r * M.m, r * M.m), dtype=np.int64)
    for i, (old, new) in enumerate(zip(M.edges, M2.edges)):
        where = {int(v): j for j, v in enumerate(old)}
        c_new = where[int(new[-1])]
        for l in range(r):
            j = where[int(new[l])]
            if j < r:
                Q[r * i + l, r * i + j] += 1
            if c_new < r:
                Q[r * i + l, r * i + c_new] -= 1
    return Q % q, M2


def rank_mod_p(mat: np.ndarray, p: int) -> int:
    """Rank over the field Z_p (p prime) by Gaussian elimination."""
    a = np.array(mat, dtype=np.int64) % p
    rows, cols = a.shape
    rank = 0
    for col in range(cols):
        piv = next((r for r in range(rank, rows) if a[r, col]), None)
        if piv is None:
            continue
        a[[rank, piv]] = a[[piv, rank]]
        a[rank] = (a[rank] * pow(int(a[rank, col]), -1, p)) % p
        for r in range(rows):
            if r != rank and a[r, col]:
                a[r] = (a[r] - a[r, col] * a[rank]) % p
        rank += 1
        if rank == rows:
            break
    return rank


def apply_mod(mat: np.ndarray, x: Sequence[int], q: int) -> np.ndarray:
    return (np.asarray(mat, dtype=np.int64) @ np.asarray(x, dtype=np.int64)) % q
