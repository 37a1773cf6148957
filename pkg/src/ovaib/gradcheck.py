"""Finite-difference certification of every loss variant.

The matrix crosses loss variants, both scorers and both denominator modes with
seeded ``(N, d, M)`` shape configurations. Leaves are the raw embeddings (plus
projector parameters for the MLP scorer); one extra variant differentiates the
full objective through small encoders so every parameter of the training
graph is probed.
"""
from dataclasses import replace

import numpy as np

from . import autodiff as ad
from . import losses

SHAPES = ((3, 4, 2), (5, 4, 3), (3, 8, 4), (5, 8, 2), (3, 4, 3))
GRADCHECK_TAU = 0.1
GRADCHECK_TOL = 1e-4


def _variants(cfg):
    out = []
    for positive in (False, True):
        for scorer in losses.SCORERS:
            c = replace(cfg, scorer=scorer, include_positive_in_denominator=positive)
            out.append(("sufficiency", c))
            out.append(("total", c))
            out.append(("encoders_total", c))
        out.append(("clip", replace(cfg, include_positive_in_denominator=positive)))
    out.append(("minimality", cfg))
    return out


def _case(variant, cfg, N, d, M, seed):
    """Return ``(loss_fn, params)`` for one matrix cell."""
    rng = np.random.default_rng([seed, N, d, M])
    zs = [rng.normal(size=(N, d)) for _ in range(M)]
    projectors = None
    if cfg.scorer == "mlp" and variant in ("sufficiency", "total", "encoders_total"):
        projectors = [ad.init_mlp([(M - 1) * d, 6, d], rng) for _ in range(M)]
    proj_arrays = [a for p in projectors or [] for a in p.arrays()]

    def split_projectors(leaves):
        if projectors is None:
            return None
        out, pos = [], 0
        for p in projectors:
            n = len(p.arrays())
            out.append(leaves[pos:pos + n])
            pos += n
        return out

    if variant == "encoders_total":
        xs = [rng.normal(size=(N, 3)) for _ in range(M)]
        encoders = [ad.init_mlp([3, 5, d], rng) for _ in range(M)]
        enc_arrays = [a for e in encoders for a in e.arrays()]
        n_enc = len(enc_arrays)

        def fn(leaves):
            per = len(encoders[0].arrays())
            z = [ad.forward_mlp(e, x, leaves[i * per:(i + 1) * per]) for i, (e, x) in enumerate(zip(encoders, xs))]
            return losses.total_loss(z, cfg, projectors, split_projectors(leaves[n_enc:]))

        return fn, enc_arrays + proj_arrays

    def fn(leaves):
        z, rest = leaves[:M], leaves[M:]
        if variant == "sufficiency":
            return losses.sufficiency_loss(z, cfg, projectors, split_projectors(rest))
        if variant == "total":
            return losses.total_loss(z, cfg, projectors, split_projectors(rest))
        if variant == "minimality":
            return losses.minimality_loss(z)
        return losses.pairwise_clip_loss(z, cfg.tau, cfg.include_positive_in_denominator)

    return fn, zs + proj_arrays


def run_gradchecks(base=None, shapes=SHAPES, tol=GRADCHECK_TOL, h=1e-5):
    """Run the full matrix. Returns a JSON-ready report with ``ok``."""
    base = base or losses.LossConfig(tau=GRADCHECK_TAU)
    cases = []
    for variant, cfg in _variants(base):
        for seed, (N, d, M) in enumerate(shapes):
            fn, params = _case(variant, cfg, N, d, M, seed)
            rep = ad.finite_diff_check(fn, params, h=h, tol=tol)
            cases.append({
                "variant": variant,
                "scorer": cfg.scorer if variant not in ("clip", "minimality") else None,
                "include_positive": cfg.include_positive_in_denominator,
                "tau": cfg.tau,
                "beta": cfg.beta,
                "N": N, "d": d, "M": M, "seed": seed,
                "coordinates": rep.checked,
                "max_rel_err": rep.max_rel_err,
                "max_abs_err": rep.max_abs_err,
                "passed": bool(rep.passed),
            })
    failures = [c for c in cases if not c["passed"]]
    return {"ok": not failures, "tol": tol, "h": h, "cases": cases, "failures": failures}
