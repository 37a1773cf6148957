"""Train / evaluate / ablate pipelines behind the command-line interface.

Every run writes into its own directory: ``config.json``, ``metrics.jsonl``
(one deterministic record per step), ``timing.jsonl`` (wall-clock, kept apart
so the metrics stay bitwise reproducible), ``checkpoint.bin`` and
``summary.json``. Evaluation appends ``eval.jsonl``.
"""
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import load_models, save_models
from .config import DEFAULT_SEEDS, RunConfig
from .errors import ConfigError, ShapeError
from .evaluation import (
    mean_cosine_scorer,
    nonempty_subsets,
    nuisance_probe,
    projection_scorer,
    random_map_expectation,
    retrieval_map,
    simulate_random_map,
    subset_probe,
)
from .linalg import cosine_similarity_batch
from .losses import mlp_scorer, projection_score
from .training import init_models, prepare_data, smoothed, train

RANDOM_TRIALS = 10_000


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ------------------------------------------------------------------- train


def run_train(cfg, out):
    """Train one model into ``out``. Returns the summary dict."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    splits = prepare_data(cfg)
    start = time.perf_counter()
    result = train(cfg, splits, out / "metrics.jsonl", out / "timing.jsonl")
    elapsed = time.perf_counter() - start
    save_models(out / "checkpoint.bin", result.encoders, result.projectors, cfg.seed, cfg.to_dict())
    total = smoothed(result.series("total"), cfg.smoothing_window)
    early = min(100, cfg.steps)
    summary = {
        "seed": cfg.seed,
        "steps": cfg.steps,
        "smoothed_total_at_100": float(total[early - 1]),
        "smoothed_total_final": float(total[-1]),
        "final_metrics": result.history[-1]["metrics"],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    with open(out / "timing.jsonl", "a") as fh:
        fh.write(json.dumps({"phase": "train_total", "wall_time": elapsed}) + "\n")
    return summary


# -------------------------------------------------------------------- eval


def mlp_projector_scorer(projector):
    """``S[q, c] = cos(candidate c, MLP(concat of query tuple q))``."""

    def score(candidates, queries):
        targets = ad.mlp_apply(projector, np.concatenate(queries, axis=1))
        return cosine_similarity_batch(targets[:, None, :], candidates[None, :, :])

    return score


def retrieval_scorer(cfg, projectors):
    if cfg.objective == "clip":
        return mean_cosine_scorer
    if cfg.effective_loss().scorer == "mlp":
        return mlp_projector_scorer(projectors[-1])
    return projection_scorer(cfg.effective_loss().lam)


def check_compatible(cfg, encoders, projectors):
    M = cfg.generator.M
    if len(encoders) != M:
        raise ShapeError(f"checkpoint has {len(encoders)} encoders, config needs {M}")
    for m, enc in enumerate(encoders):
        if enc.in_dim != cfg.generator.d_obs or enc.out_dim != cfg.embed_dim:
            raise ShapeError(
                f"encoder {m} maps {enc.in_dim} -> {enc.out_dim}, config needs "
                f"{cfg.generator.d_obs} -> {cfg.embed_dim}"
            )
    needs_proj = cfg.objective == "ovaib" and cfg.effective_loss().scorer == "mlp"
    if needs_proj and (projectors is None or len(projectors) != M):
        raise ShapeError("config uses the mlp scorer but the checkpoint has no projectors")


def evaluate_models(cfg, encoders, projectors=None, splits=None):
    """Retrieval, all subset probes and per-modality nuisance probes."""
    check_compatible(cfg, encoders, projectors)
    splits = splits or prepare_data(cfg)
    train_ds, _, test_ds = splits
    M = cfg.generator.M
    K = cfg.retrieval_pool
    if len(test_ds) < K:
        raise ConfigError(f"test split has {len(test_ds)} samples, retrieval pool needs {K}")
    emb = [ad.mlp_apply(encoders[m], test_ds.x[m][:K]) for m in range(M)]
    ret = retrieval_map(emb[:-1], emb[-1], retrieval_scorer(cfg, projectors))
    sims = simulate_random_map(K, RANDOM_TRIALS, np.random.default_rng(cfg.seed))
    baseline = random_map_expectation(K)
    records = [{
        **ret.to_record(),
        "seed": cfg.seed,
        "target_modality": M - 1,
        "random_baseline": baseline,
        "random_std": float(sims.std(ddof=1)),
        "z_vs_random": float((ret.mAP - baseline) / sims.std(ddof=1)),
    }]
    for subset in nonempty_subsets(M):
        records.append({**subset_probe((train_ds, test_ds), encoders, subset).to_record(), "seed": cfg.seed})
    if cfg.generator.d_nuisance > 0:
        for m in range(M):
            records.append({**nuisance_probe((train_ds, test_ds), encoders, m).to_record(),
                            "kind": "nuisance", "seed": cfg.seed})
    return records


def run_eval(cfg, checkpoint=None, out=None, untrained=False):
    """Evaluate a checkpoint (or freshly initialized encoders) and write ``eval.jsonl``."""
    if untrained:
        encoders, projectors = init_models(cfg, np.random.default_rng(cfg.seed))
    else:
        encoders, projectors, _ = load_models(checkpoint)
    records = evaluate_models(cfg, encoders, projectors)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_jsonl(out / "eval.jsonl", records)
    return records


# ------------------------------------------------------------------ ablate


ARMS = (("beta1_geometric", False, False), ("beta0_geometric", True, False),
        ("beta1_mlp", False, True), ("beta0_mlp", True, True))


def _arm_job(args):
    cfg_json, out = args
    cfg = RunConfig.from_json(cfg_json)
    summary = run_train(cfg, out)
    encoders, projectors, _ = load_models(Path(out) / "checkpoint.bin")
    records = evaluate_models(cfg, encoders, projectors)
    write_jsonl(Path(out) / "eval.jsonl", records)
    nuis = [r["value"] for r in records if r["kind"] == "nuisance"]
    return {
        "mAP": records[0]["mAP"],
        "nuisance_r2": float(np.mean(nuis)) if nuis else None,
        "smoothed_total_final": summary["smoothed_total_final"],
    }


def ablation_jobs(cfg, out, seeds=DEFAULT_SEEDS, arms=ARMS):
    jobs = []
    for seed in seeds:
        for name, beta_zero, mlp in arms:
            arm_cfg = replace(cfg.with_seed(seed), beta_zero=beta_zero, mlp_projector=mlp, objective="ovaib")
            jobs.append(((name, seed), (arm_cfg.to_json(), str(Path(out) / f"{name}_seed{seed}"))))
    return jobs


def score_timing(d=512, M=3, repeats=200, seed=0):
    """Mean seconds per single score for the geometric and MLP projectors.

    The MLP maps the ``(M-1)d`` concatenation to ``d`` through one hidden
    layer of width ``d``.
    """
    rng = np.random.default_rng(seed)
    z = rng.normal(size=d)
    rest = [rng.normal(size=d) for _ in range(M - 1)]
    proj = ad.init_mlp([(M - 1) * d, d, d], rng)
    out = {}
    for name, fn in (("geometric", lambda: projection_score(z, rest)),
                     ("mlp", lambda: mlp_scorer(z, rest, proj))):
        fn()
        start = time.perf_counter()
        for _ in range(repeats):
            fn()
        out[name] = (time.perf_counter() - start) / repeats
    return {"d": d, "M": M, "repeats": repeats, "seconds_per_score": out,
            "geometric_faster": out["geometric"] < out["mlp"]}


def run_ablation(cfg, out, seeds=DEFAULT_SEEDS, arms=ARMS, workers=1):
    """Train and evaluate every (seed, arm) cell, then summarize the deltas.

    Cells are independent; with ``workers > 1`` they run in separate
    processes with isolated output directories.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = ablation_jobs(cfg, out, seeds, arms)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_arm_job, [j for _, j in jobs]))
    else:
        results = [_arm_job(j) for _, j in jobs]
    cells = [{"arm": name, "seed": seed, **res} for ((name, seed), _), res in zip(jobs, results)]
    write_jsonl(out / "ablation.jsonl", cells)

    by = {(c["arm"], c["seed"]): c for c in cells}
    names = {a[0] for a in arms}
    per_seed = []
    for seed in seeds:
        row = {"seed": seed}
        for proj in ("geometric", "mlp"):
            on, off = by.get((f"beta1_{proj}", seed)), by.get((f"beta0_{proj}", seed))
            if on and off:
                row[f"delta_beta_map_{proj}"] = on["mAP"] - off["mAP"]
                if on["nuisance_r2"] is not None:
                    row[f"delta_beta_nuisance_r2_{proj}"] = on["nuisance_r2"] - off["nuisance_r2"]
        per_seed.append(row)
    summary = {"seeds": list(seeds), "arms": sorted(names), "per_seed": per_seed, "timing": score_timing()}
    key = "delta_beta_nuisance_r2_geometric"
    wins = [r[key] <= 0 for r in per_seed if key in r]
    if wins:
        summary["beta_reduces_nuisance_majority"] = sum(wins) > len(wins) / 2
    (out / "ablation_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
