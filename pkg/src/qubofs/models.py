"""Similarity-based recommenders and ranking.

All models produce an item-item similarity matrix with zero diagonal.
Recommendation scores are user profiles times the similarity matrix; the
highest-scoring items win, ties broken by the smaller item index so that runs
are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, RankTooLarge
from .sparse import SparseMatrix

BM25_K1 = 1.2
BM25_B = 0.75


class ModelKind(str, Enum):
    ITEM_KNN_CF = "item_knn_cf"
    ITEM_KNN_CBF = "item_knn_cbf"
    PURE_SVD = "pure_svd"
    RP3_BETA = "rp3beta"


@dataclass(frozen=True)
class SimilarityModel:
    """Top-k-sparsified item-item similarity plus the producing hyperparameters."""

    s: SparseMatrix
    kind: ModelKind
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.s.n_rows == self.s.n_cols and np.any(self.s.to_scipy().diagonal() != 0):
            raise ValueError("similarity matrix must have zero diagonal")
        top_k = self.hyperparams.get("topK")
        if top_k is not None and np.any(self.s.row_nnz() > top_k):
            raise ValueError("a row exceeds the topK bound")


@dataclass(frozen=True)
class FeatureWeights:
    w: np.ndarray

    def __post_init__(self):
        if np.any(~np.isfinite(self.w)) or np.any(self.w < 0):
            raise ValueError("feature weights must be finite and non-negative")

    def top_quota(self, quota: float) -> list[int]:
        """Indices of the top ceil(quota * n) features, ties to smaller index."""
        if not 0 < quota <= 1:
            raise ValueError("quota must be in (0, 1]")
        n = self.w.shape[0]
        count = math.ceil(quota * n - 1e-9)
        order = np.lexsort((np.arange(n), -self.w))
        return sorted(int(f) for f in order[:count])


def cosine_knn(
    vectors: SparseMatrix,
    top_k: int,
    shrink: float = 0.0,
    normalize: bool = True,
    kind: ModelKind = ModelKind.ITEM_KNN_CF,
) -> SimilarityModel:
    """Pairwise similarity of `vectors` rows: dot products, optionally divided
    by (norm_i * norm_j + shrink). Diagonal removed, then per-row top-k."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if shrink < 0:
        raise ValueError("shrink must be >= 0")
    gram = vectors @ vectors.transpose()
    if normalize:
        sq = vectors.power(2.0)
        norms = np.sqrt(sq.to_scipy().sum(axis=1))
        m = gram.to_scipy().tocoo()
        denom = norms[m.row] * norms[m.col] + shrink
        # a stored dot product implies both rows are nonzero, so denom > 0
        m.data = m.data / denom
        gram = SparseMatrix(m)
    s = gram.zero_diagonal().top_k_per_row(top_k)
    return SimilarityModel(
        s, kind, {"topK": top_k, "shrink": shrink, "normalize": normalize}
    )


def apply_feature_weighting(icm: SparseMatrix, scheme: str = "none") -> SparseMatrix:
    """Reweight a binary item-feature matrix with TF-IDF or BM25."""
    if scheme == "none":
        return icm
    if scheme not in ("tfidf", "bm25"):
        raise ValueError(f"unknown weighting scheme {scheme!r}")
    n_items = icm.n_rows
    df = icm.col_nnz().astype(np.float64)
    m = icm.to_scipy().tocoo()
    if scheme == "tfidf":
        idf = np.zeros_like(df)
        nz = df > 0
        idf[nz] = np.log(n_items / df[nz])
        m.data = idf[m.col]
    else:
        idf = np.log((n_items - df + 0.5) / (df + 0.5) + 1.0)
        lengths = icm.row_nnz().astype(np.float64)
        avg_len = icm.nnz / n_items if n_items else 0.0
        denom = 1.0 + BM25_K1 * (1.0 - BM25_B + BM25_B * lengths / avg_len)
        m.data = idf[m.col] * (BM25_K1 + 1.0) / denom[m.row]
    return SparseMatrix(m)


def tfidf_feature_scores(icm: SparseMatrix) -> FeatureWeights:
    """Per-feature score ln(n_items / document frequency); df 0 scores 0."""
    df = icm.col_nnz().astype(np.float64)
    scores = np.zeros_like(df)
    nz = df > 0
    scores[nz] = np.log(icm.n_rows / df[nz])
    return FeatureWeights(np.maximum(scores, 0.0))


def randomized_svd(
    matrix: SparseMatrix,
    rank: int,
    seed: int,
    oversample: int = 10,
    power_iterations: int = 7,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded randomized subspace iteration for a truncated SVD."""
    n_rows, n_cols = matrix.shape
    if not 1 <= rank <= min(n_rows, n_cols):
        raise RankTooLarge(f"rank {rank} outside [1, {min(n_rows, n_cols)}]")
    rng = np.random.default_rng(seed)
    a = matrix.to_scipy()
    l = min(rank + oversample, min(n_rows, n_cols))
    omega = rng.standard_normal((n_cols, l))
    q, _ = np.linalg.qr(a @ omega)
    for _ in range(power_iterations):
        z, _ = np.linalg.qr(a.T @ q)
        q, _ = np.linalg.qr(a @ z)
    b = q.T @ a
    u_small, sigma, vt = np.linalg.svd(b, full_matrices=False)
    u = q @ u_small
    return u[:, :rank], sigma[:rank], vt[:rank, :]


def pure_svd(urm: SparseMatrix, num_factors: int, seed: int = 0) -> SimilarityModel:
    """Folding-in similarity: item latent factors times their transpose."""
    _, _, vt = randomized_svd(urm, num_factors, seed)
    s_dense = vt.T @ vt
    np.fill_diagonal(s_dense, 0.0)
    return SimilarityModel(
        SparseMatrix.from_dense(s_dense),
        ModelKind.PURE_SVD,
        {"num_factors": num_factors, "seed": seed},
    )


def bipartite_walk_similarity(urm: SparseMatrix, alpha: float) -> SparseMatrix:
    """Item-to-item transition probabilities through users, each leg L1-row-
    normalized and raised elementwise to alpha before the product."""
    p_ui = urm.row_normalize("l1").power(alpha)
    p_iu = urm.transpose().row_normalize("l1").power(alpha)
    return p_iu @ p_ui


def rp3beta(
    urm: SparseMatrix,
    alpha: float = 1.0,
    beta: float = 0.0,
    top_k: int = 100,
    normalize: bool = True,
) -> SimilarityModel:
    """Random-walk similarity with popularity damping.

    Column j is divided by pop(j)**beta (pop = interaction count); zero-
    popularity columns are left untouched. Diagonal removed, per-row top-k,
    then optional L1 row normalization.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be >= 0")
    s = bipartite_walk_similarity(urm, alpha)
    if beta > 0:
        pop = urm.col_nnz().astype(np.float64)
        damp = np.ones_like(pop)
        nz = pop > 0
        damp[nz] = pop[nz] ** (-beta)
        m = s.to_scipy().tocoo()
        m.data = m.data * damp[m.col]
        s = SparseMatrix(m)
    s = s.zero_diagonal().top_k_per_row(top_k)
    if normalize:
        s = s.row_normalize("l1")
    return SimilarityModel(
        s,
        ModelKind.RP3_BETA,
        {"alpha": alpha, "beta": beta, "topK": top_k, "normalize": normalize},
    )


def score_and_rank(
    model: SimilarityModel,
    user_profiles: SparseMatrix,
    cutoff: int,
    exclude_seen: bool = True,
    candidate_items: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Ranked item lists per user from profile-times-similarity scores.

    Ties break toward the smaller item index, which also serves as the
    deterministic fallback for users whose scores are all zero.
    """
    if user_profiles.n_cols != model.s.n_rows:
        raise DimensionMismatch(
            f"profiles have {user_profiles.n_cols} items, similarity {model.s.n_rows}"
        )
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    scores = (user_profiles @ model.s).to_dense()
    seen = user_profiles.to_dense() > 0
    if candidate_items is None:
        candidates = np.arange(model.s.n_cols)
    else:
        candidates = np.asarray(sorted(int(i) for i in candidate_items), dtype=np.int64)
    ranked = []
    for u in range(user_profiles.n_rows):
        cand = candidates
        if exclude_seen:
            cand = cand[~seen[u, cand]]
        s_u = scores[u, cand]
        order = np.lexsort((cand, -s_u))
        ranked.append(cand[order[:cutoff]])
    return ranked
