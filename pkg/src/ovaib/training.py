"""Encoder pre-training with the one-vs-all objective or the pairwise baseline."""
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import DivergenceError
from .losses import loss_components, minimality_loss, pairwise_clip_loss
from .synth_data import generate, holdout_split


@dataclass
class TrainResult:
    encoders: list
    projectors: list
    history: list = field(default_factory=list)

    def series(self, key):
        return np.array([rec["metrics"][key] for rec in self.history])


def prepare_data(cfg):
    ds = generate(cfg.generator, cfg.n_samples)
    return holdout_split(ds, cfg.splits)


def init_models(cfg, rng):
    encoders = [ad.init_mlp(cfg.encoder_widths(m), rng) for m in range(cfg.generator.M)]
    projectors = None
    if cfg.objective == "ovaib" and cfg.effective_loss().scorer == "mlp":
        projectors = [ad.init_mlp(cfg.projector_widths(), rng) for _ in range(cfg.generator.M)]
    return encoders, projectors


def _flatten(encoders, projectors):
    arrays = [a for enc in encoders for a in enc.arrays()]
    for proj in projectors or []:
        arrays += proj.arrays()
    return arrays


def _unflatten(arrays, encoders, projectors):
    out_enc, pos = [], 0
    for enc in encoders:
        n = len(enc.arrays())
        out_enc.append(enc.with_arrays(arrays[pos:pos + n]))
        pos += n
    out_proj = None
    if projectors:
        out_proj = []
        for proj in projectors:
            n = len(proj.arrays())
            out_proj.append(proj.with_arrays(arrays[pos:pos + n]))
            pos += n
    return out_enc, out_proj


def batch_losses(cfg, encoders, projectors, xs, leaves=None):
    """Build the graph for one batch. Returns ``(total, metrics)``.

    ``leaves`` are parameter nodes in :func:`_flatten` order; fresh leaves are
    created when omitted.
    """
    if leaves is None:
        leaves = [ad.Node(a) for a in _flatten(encoders, projectors)]
    pos, zs = 0, []
    for enc, x in zip(encoders, xs):
        n = len(enc.arrays())
        zs.append(ad.forward_mlp(enc, x, leaves[pos:pos + n]))
        pos += n
    proj_leaves = None
    if projectors:
        proj_leaves = []
        for proj in projectors:
            n = len(proj.arrays())
            proj_leaves.append(leaves[pos:pos + n])
            pos += n
    loss_cfg = cfg.effective_loss()
    if cfg.objective == "clip":
        total = pairwise_clip_loss(zs, loss_cfg.tau, loss_cfg.include_positive_in_denominator)
        lm = minimality_loss(zs)
        metrics = {"L_clip": float(total.value), "L_M": float(lm.value), "total": float(total.value)}
        return total, metrics
    total, ls, lm = loss_components(zs, loss_cfg, projectors, proj_leaves)
    metrics = {"L_S": float(ls.value), "L_M": float(lm.value), "total": float(total.value)}
    return total, metrics


def _batches(n, batch_size, rng):
    while True:
        order = rng.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            yield order[start:start + batch_size]


def train(cfg, splits=None, metrics_path=None, timing_path=None):
    """Run ``cfg.steps`` Adam steps on the training split.

    Each step appends ``{"phase", "step", "seed", "metrics"}`` to
    ``metrics_path`` (JSON lines). Wall-clock time goes to ``timing_path`` so
    that the metrics file stays bitwise reproducible.
    """
    if splits is None:
        splits = prepare_data(cfg)
    train_ds = splits[0]
    rng = np.random.default_rng(cfg.seed)
    encoders, projectors = init_models(cfg, rng)
    params = _flatten(encoders, projectors)
    state = ad.AdamState(lr=cfg.lr)
    batches = _batches(len(train_ds), cfg.batch_size, rng)
    result = TrainResult(encoders, projectors)

    metrics_fh = open(metrics_path, "w") if metrics_path else None
    timing_fh = open(timing_path, "w") if timing_path else None
    start = time.perf_counter()
    try:
        for step in range(1, cfg.steps + 1):
            idx = next(batches)
            leaves = [ad.Node(a) for a in params]
            total, metrics = batch_losses(cfg, encoders, projectors, [x[idx] for x in train_ds.x], leaves)
            if not all(np.isfinite(v) for v in metrics.values()):
                raise DivergenceError(step, f"non-finite loss {metrics}")
            ad.backward(total)
            grads = [leaf.grad for leaf in leaves]
            params = ad.adam_step(state, params, grads)
            encoders, projectors = _unflatten(params, encoders, projectors)
            record = {"phase": "train", "step": step, "seed": cfg.seed, "metrics": metrics}
            result.history.append(record)
            if metrics_fh:
                metrics_fh.write(json.dumps(record, sort_keys=True) + "\n")
            if timing_fh:
                timing_fh.write(json.dumps({"step": step, "wall_time": time.perf_counter() - start}) + "\n")
    finally:
        for fh in (metrics_fh, timing_fh):
            if fh:
                fh.close()
    result.encoders, result.projectors = encoders, projectors
    return result


def smoothed(values, window):
    """Trailing moving average (shorter windows at the start)."""
    values = np.asarray(values, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, values.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def run_dir(cfg, out=None):
    path = Path(out or cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path
