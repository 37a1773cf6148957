"""Alignment objectives.

A *bundle* is a sequence of ``M >= 2`` embedding batches, each ``(N, d)``,
row ``n`` of every batch belonging to the same sample. Batches may be plain
arrays or :class:`~ovaib.autodiff.Node` objects; every loss returns a scalar
node so it can be differentiated with :func:`~ovaib.autodiff.backward`.

The one-vs-all contrastive term scores anchor ``z_n`` of modality ``m``
against the remaining-modality tuple of sample ``n'`` by projecting ``z_n``
onto the span of that tuple and taking the cosine between ``z_n`` and its
projection. Per-sample denominators run over ``n' != n`` unless
``include_positive_in_denominator`` is set.
"""
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import autodiff as ad
from .errors import DomainError, ShapeError
from .linalg import (
    DEFAULT_RIDGE,
    as_vector,
    cosine_similarity,
    cosine_similarity_batch,
    pairwise_ridge_project,
    ridge_project,
)

SCORERS = ("projection", "mlp")


@dataclass
class LossConfig:
    tau: float = 0.01
    beta: float = 1.0
    lam: float = DEFAULT_RIDGE
    scorer: str = "projection"
    include_positive_in_denominator: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        if not self.lam > 0:
            raise DomainError(f"lam must be positive, got {self.lam}")
        if not self.beta >= 0:
            raise DomainError(f"beta must be nonnegative, got {self.beta}")
        if self.scorer not in SCORERS:
            raise DomainError(f"scorer must be one of {SCORERS}, got {self.scorer!r}")


def check_bundle(bundle, min_batch=2):
    """Validate a bundle and return it as a list of nodes."""
    nodes = [ad.as_node(b) for b in bundle]
    if len(nodes) < 2:
        raise ShapeError(f"need at least two modalities, got {len(nodes)}")
    shape = nodes[0].shape
    if len(shape) != 2:
        raise ShapeError(f"embedding batches must be 2-D, got {shape}")
    for i, node in enumerate(nodes):
        if node.shape != shape:
            raise ShapeError(f"modality {i} has shape {node.shape}, modality 0 has {shape}")
    if shape[0] < min_batch:
        raise ShapeError(f"batch size {shape[0]} < {min_batch}: no negatives for the contrastive term")
    return nodes


# ----------------------------------------------------------------- scorers


def projection_score(z, rest, lam=DEFAULT_RIDGE):
    """Cosine between ``z`` and its ridge projection onto ``span(rest)``."""
    z = as_vector(z, "z")
    rest = [as_vector(r, "rest vector") for r in rest]
    if not rest:
        raise ShapeError("need at least one remaining-modality vector")
    A = np.column_stack(rest)
    return cosine_similarity(z, ridge_project(A, z, lam))


def mlp_scorer(z, rest, params):
    """Cosine between ``z`` and an MLP image of the concatenated ``rest``."""
    z = as_vector(z, "z")
    joined = np.concatenate([as_vector(r, "rest vector") for r in rest])
    if params.in_dim != joined.size or params.out_dim != z.size:
        raise ShapeError(
            f"projector maps {params.in_dim} -> {params.out_dim}, need {joined.size} -> {z.size}"
        )
    return cosine_similarity(z, ad.mlp_apply(params, joined))


def projection_score_matrix(anchors, rest, lam=DEFAULT_RIDGE):
    """Graph-free score table ``S[n, n'] = score(anchors[n], rest tuple n')``.

    ``anchors`` is ``(N, d)``; ``rest`` is a list of ``(N', d)`` arrays.
    """
    anchors = np.asarray(anchors, dtype=np.float64)
    A = np.stack([np.asarray(r, dtype=np.float64) for r in rest], axis=-1)
    zbar, _, _ = pairwise_ridge_project(anchors, A, lam)
    return cosine_similarity_batch(anchors[:, None, :], zbar)


def _projection_scores(anchor, rest, lam):
    zbar = ad.ridge_project_pairs(anchor, ad.stack(rest, axis=-1), lam)
    return ad.cosine(ad.expand_dims(anchor, 1), zbar)


def _mlp_scores(anchor, rest, projector, leaves=None):
    t = ad.forward_mlp(projector, ad.concat(rest, axis=-1), leaves)
    return ad.cosine(ad.expand_dims(anchor, 1), ad.expand_dims(t, 0))


def score_matrix_m(bundle, m, cfg, projectors=None, projector_leaves=None):
    """Differentiable ``(N, N)`` score table for modality ``m``."""
    nodes = check_bundle(bundle)
    if not 0 <= m < len(nodes):
        raise DomainError(f"modality index {m} out of range for M={len(nodes)}")
    rest = [z for i, z in enumerate(nodes) if i != m]
    if cfg.scorer == "projection":
        return _projection_scores(nodes[m], rest, cfg.lam)
    if projectors is None:
        raise DomainError("the mlp scorer needs one projector per modality")
    leaves = None if projector_leaves is None else projector_leaves[m]
    return _mlp_scores(nodes[m], rest, projectors[m], leaves)


def contrastive_terms(scores, tau, include_positive=False):
    """Per-row ``-s_nn/tau + log sum_{n'} exp(s_nn'/tau)`` over an ``(N, N)`` table."""
    N = scores.shape[0]
    logits = scores * (1.0 / tau)
    diag = logits[np.arange(N), np.arange(N)]
    mask = None if include_positive else ~np.eye(N, dtype=bool)
    return ad.masked_logsumexp(logits, axis=1, mask=mask) - diag


# ------------------------------------------------------------------ losses


def sufficiency_terms_m(bundle, m, cfg, projectors=None, projector_leaves=None):
    scores = score_matrix_m(bundle, m, cfg, projectors, projector_leaves)
    return contrastive_terms(scores, cfg.tau, cfg.include_positive_in_denominator)


def sufficiency_loss_m(bundle, m, cfg, projectors=None, projector_leaves=None):
    """One-vs-all InfoNCE for modality ``m``."""
    return sufficiency_terms_m(bundle, m, cfg, projectors, projector_leaves).mean()


def sufficiency_loss(bundle, cfg, projectors=None, projector_leaves=None):
    """Mean of :func:`sufficiency_loss_m` over modalities."""
    nodes = check_bundle(bundle)
    M = len(nodes)
    total = sufficiency_loss_m(nodes, 0, cfg, projectors, projector_leaves)
    for m in range(1, M):
        total = total + sufficiency_loss_m(nodes, m, cfg, projectors, projector_leaves)
    return total * (1.0 / M)


def minimality_loss_m(bundle, m):
    """Batch mean of ``||z_m - mean_{i != m} z_i||^2``."""
    nodes = check_bundle(bundle, min_batch=1)
    M = len(nodes)
    if not 0 <= m < M:
        raise DomainError(f"modality index {m} out of range for M={M}")
    rest = [z for i, z in enumerate(nodes) if i != m]
    centre = rest[0]
    for z in rest[1:]:
        centre = centre + z
    diff = nodes[m] - centre * (1.0 / (M - 1))
    return (diff * diff).sum(axis=1).mean()


def minimality_loss(bundle):
    nodes = check_bundle(bundle, min_batch=1)
    M = len(nodes)
    total = minimality_loss_m(nodes, 0)
    for m in range(1, M):
        total = total + minimality_loss_m(nodes, m)
    return total * (1.0 / M)


def total_loss(bundle, cfg, projectors=None, projector_leaves=None):
    """``L_S + beta * L_M``."""
    nodes = check_bundle(bundle)
    ls = sufficiency_loss(nodes, cfg, projectors, projector_leaves)
    if cfg.beta == 0:
        return ls
    return ls + minimality_loss(nodes) * cfg.beta


def loss_components(bundle, cfg, projectors=None, projector_leaves=None):
    """``(total, L_S, L_M)`` as nodes sharing one graph."""
    nodes = check_bundle(bundle)
    ls = sufficiency_loss(nodes, cfg, projectors, projector_leaves)
    lm = minimality_loss(nodes)
    total = ls if cfg.beta == 0 else ls + lm * cfg.beta
    return total, ls, lm


def clip_direction(za, zb, tau, include_positive=False):
    """InfoNCE anchored on ``za`` with candidates ``zb``."""
    scores = ad.cosine(ad.expand_dims(za, 1), ad.expand_dims(zb, 0))
    return contrastive_terms(scores, tau, include_positive).mean()


def pairwise_clip_loss(bundle, tau, include_positive=False):
    """Symmetric CLIP loss summed over all unordered modality pairs."""
    nodes = check_bundle(bundle)
    total = None
    for i, j in combinations(range(len(nodes)), 2):
        pair = (clip_direction(nodes[i], nodes[j], tau, include_positive)
                + clip_direction(nodes[j], nodes[i], tau, include_positive)) * 0.5
        total = pair if total is None else total + pair
    return total


# ------------------------------------------------------- population limit


def population_infonce_m(joint, codebooks, m, cfg, batch_size):
    """Large-batch limit of the modality-``m`` contrastive loss on a finite system.

    Variable ``i`` of ``joint`` takes the embedding ``codebooks[i][a]`` for
    value ``a``. Batch averages become expectations under ``joint`` and the
    negative sum over ``n' != n`` becomes ``(batch_size - 1)`` times an
    expectation under the remaining-modality marginal::

        L = -E_P[T] + E_{z_m}[ log((N - 1) E_{rest}[exp T]) ],
        T = score(z_m, rest) / tau.

    Only the projection scorer is supported. Returns ``(loss, critic)`` where
    ``critic`` is the ``(|z_m|, |rest|)`` table of ``T``.
    """
    if batch_size < 2:
        raise DomainError("batch size must be at least 2")
    M = joint.num_vars
    rest_idx = [i for i in range(M) if i != m]
    sizes = joint.alphabet_sizes
    grids = np.stack(np.meshgrid(*[np.arange(sizes[i]) for i in rest_idx], indexing="ij"), -1)
    grids = grids.reshape(-1, len(rest_idx))
    rest_vecs = [np.asarray(codebooks[i], dtype=np.float64)[grids[:, c]] for c, i in enumerate(rest_idx)]
    scores = projection_score_matrix(np.asarray(codebooks[m], dtype=np.float64), rest_vecs, cfg.lam)
    T = scores / cfg.tau

    perm = [m] + rest_idx
    p = np.transpose(joint.probs, perm).reshape(sizes[m], -1)
    p_m = p.sum(axis=1)
    p_rest = p.sum(axis=0)
    top = T.max(axis=1, keepdims=True)
    log_e = top[:, 0] + np.log(np.exp(T - top) @ p_rest)
    loss = -np.sum(p * T) + np.sum(p_m * (np.log(batch_size - 1) + log_e))
    return float(loss), T
