"""Downstream evaluation: single-relevant retrieval, subset probes and
nuisance-leakage probes.

Encoders are passed as a sequence with one entry per modality; each entry is
either :class:`~ovaib.autodiff.MlpParams` or a plain callable mapping an
``(N, d_obs)`` array to embeddings.
"""
from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np
from sklearn.linear_model import LogisticRegression, Ridge
from sklearn.metrics import mean_squared_error, r2_score
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .autodiff import MlpParams, mlp_apply
from .errors import DomainError, ShapeError
from .linalg import DEFAULT_RIDGE, cosine_similarity_batch
from .losses import projection_score_matrix


@dataclass
class RetrievalResult:
    average_precisions: np.ndarray
    mAP: float
    pool_size: int

    def to_record(self):
        return {"kind": "retrieval", "mAP": self.mAP, "pool_size": self.pool_size,
                "queries": int(self.average_precisions.size)}


@dataclass
class ProbeResult:
    subset: tuple
    metric: str
    value: float
    description: str

    @property
    def label(self):
        return subset_label(self.subset)

    def to_record(self):
        rec = asdict(self)
        rec["subset"] = list(self.subset)
        rec["label"] = self.label
        rec["kind"] = "probe"
        return rec


def subset_label(subset):
    return "+".join(f"m{i}" for i in subset)


def nonempty_subsets(M):
    return [c for r in range(1, M + 1) for c in combinations(range(M), r)]


# ---------------------------------------------------------------- scorers


def projection_scorer(lam=DEFAULT_RIDGE, chunk=128):
    """``S[q, c]``: candidate ``c`` projected onto the span of query tuple ``q``."""

    def score(candidates, queries):
        blocks = [
            projection_score_matrix(candidates[i:i + chunk], queries, lam)
            for i in range(0, len(candidates), chunk)
        ]
        return np.concatenate(blocks, axis=0).T

    return score


def mean_cosine_scorer(candidates, queries):
    """Average over query modalities of the candidate-query cosine."""
    sims = [cosine_similarity_batch(q[:, None, :], candidates[None, :, :]) for q in queries]
    return np.mean(sims, axis=0)


# -------------------------------------------------------------- retrieval


def ranks_of_matches(scores):
    """1-based rank of the same-index candidate in each row of ``scores``.

    Ties are broken by ascending candidate index.
    """
    scores = np.asarray(scores, dtype=np.float64)
    Q, K = scores.shape
    if Q > K:
        raise ShapeError(f"{Q} queries but only {K} candidates")
    true = scores[np.arange(Q), np.arange(Q)][:, None]
    better = scores > true
    tied_before = (scores == true) & (np.arange(K)[None, :] < np.arange(Q)[:, None])
    return 1 + better.sum(axis=1) + tied_before.sum(axis=1)


def retrieval_map(queries, candidates, scorer):
    """mAP with one relevant candidate per query (the same-index sample)."""
    queries = [np.asarray(q, dtype=np.float64) for q in queries]
    candidates = np.asarray(candidates, dtype=np.float64)
    for q in queries:
        if q.shape[0] != candidates.shape[0]:
            raise ShapeError(f"{q.shape[0]} queries vs {candidates.shape[0]} candidates")
    scores = scorer(candidates, queries)
    ap = 1.0 / ranks_of_matches(scores)
    return RetrievalResult(ap, float(ap.mean()), candidates.shape[0])


def random_map_expectation(K):
    """Expected mAP of a uniformly random ranking: ``H_K / K``."""
    return float(np.sum(1.0 / np.arange(1, K + 1)) / K)


def simulate_random_map(K, trials, rng, queries=None):
    """mAP of ``trials`` random rankers, each over ``queries`` queries.

    Under exchangeable scores the rank of the match is uniform on ``1..K``.
    """
    queries = K if queries is None else queries
    ranks = rng.integers(1, K + 1, size=(trials, queries))
    return (1.0 / ranks).mean(axis=1)


# ------------------------------------------------------------------ probes


def embed(encoder, x):
    if encoder is None:
        raise DomainError("encoder is missing (untrained)")
    if isinstance(encoder, MlpParams):
        return mlp_apply(encoder, x)
    return np.asarray(encoder(x), dtype=np.float64)


def _features(ds, encoders, subset):
    return np.concatenate([embed(encoders[m], ds.x[m]) for m in subset], axis=1)


def _fit_probe(train_x, train_y, test_x, test_y, classification):
    if classification:
        classes = np.unique(train_y)
        if classes.size == 1:
            pred = np.full(test_y.shape, classes[0])
        else:
            model = make_pipeline(StandardScaler(), LogisticRegression(max_iter=2000))
            pred = model.fit(train_x, train_y).predict(test_x)
        return "accuracy", float(np.mean(pred == test_y))
    model = make_pipeline(StandardScaler(), Ridge(alpha=1.0))
    pred = model.fit(train_x, train_y).predict(test_x)
    return "mse", float(mean_squared_error(test_y, pred))


def subset_probe(splits, encoders, subset, task=None):
    """Linear probe on concatenated frozen embeddings of ``subset``.

    ``splits`` is ``(train, test)``. ``task`` is ``"classification"`` or
    ``"regression"``; by default it follows the dataset's labels.
    """
    train, test = splits
    subset = tuple(sorted(set(subset)))
    if not subset:
        raise DomainError("modality subset must be non-empty")
    classification = train.is_classification if task is None else task == "classification"
    metric, value = _fit_probe(
        _features(train, encoders, subset), train.labels,
        _features(test, encoders, subset), test.labels,
        classification,
    )
    kind = "logistic regression" if classification else "ridge regression"
    return ProbeResult(subset, metric, value, f"{kind} on {subset_label(subset)}")


def nuisance_probe(splits, encoders, m):
    """Held-out R^2 of a ridge regression from ``z_m`` to the nuisance ``n_m``."""
    train, test = splits
    if train.nuisance[m].shape[1] == 0:
        raise DomainError(f"modality {m} has no stored nuisance variables")
    model = make_pipeline(StandardScaler(), Ridge(alpha=1.0))
    model.fit(embed(encoders[m], train.x[m]), train.nuisance[m])
    pred = model.predict(embed(encoders[m], test.x[m]))
    r2 = r2_score(test.nuisance[m], pred, multioutput="uniform_average")
    return ProbeResult((m,), "r2", float(r2), f"ridge R^2 of nuisance from m{m}")
