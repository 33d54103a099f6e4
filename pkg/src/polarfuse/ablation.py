"""Fusion-strategy by noise-level robustness table."""

from __future__ import annotations

import copy
from pathlib import Path

from . import io
from .data import load_dataset, load_manifest, split_ids
from .diffusion import PolarDiffusionModel
from .evaluation import evaluate
from .metrics import mean_depth_metrics

COLUMNS = ("absrel", "delta1", "delta2")


def checkpoint_path(root, strategy, seed):
    return Path(root) / f"{strategy}-s{seed}" / "final.pfck"


def run_ablation(cfg, ck_root, train_missing=False, train_fn=None):
    """Evaluate every (strategy, seed) checkpoint at every noise level.

    Metrics are averaged over seeds, and for the random strategy also over
    ``cfg.eval.random_draws`` independent gate draws. Returns a plain dict.
    """
    manifest, _ = load_manifest(cfg.dataset.manifest)
    train_ids, test_ids = split_ids([s["id"] for s in manifest["samples"]], cfg.dataset.test_count)
    strategies, seeds, betas = cfg.eval.strategies, cfg.eval.seeds, cfg.eval.betas

    missing = [(s, k) for s in strategies for k in seeds if not checkpoint_path(ck_root, s, k).exists()]
    if missing and not train_missing:
        names = ", ".join(str(checkpoint_path(ck_root, s, k)) for s, k in missing)
        raise FileNotFoundError(f"missing checkpoint(s): {names}")
    if missing:
        train_set = load_dataset(cfg.dataset.manifest, train_ids)
        for strategy, seed in missing:
            run_cfg = copy.deepcopy(cfg)
            run_cfg.model.fusion = strategy
            run_cfg.train.seed = seed
            out = checkpoint_path(ck_root, strategy, seed).parent
            out.mkdir(parents=True, exist_ok=False)
            train_fn(run_cfg, out, dataset=train_set, quiet=True)

    test = load_dataset(cfg.dataset.manifest, test_ids)
    rows, hashes = {}, {}
    for strategy in strategies:
        draws = cfg.eval.random_draws if strategy == "random" else 1
        per_beta = {b: [] for b in betas}
        for seed in seeds:
            path = checkpoint_path(ck_root, strategy, seed)
            hashes[f"{strategy}-s{seed}"] = io.file_sha256(path)
            model = PolarDiffusionModel.load(path)
            for beta in betas:
                for draw in range(draws):
                    model.reset_fusion(seed=draw)
                    summary, _ = evaluate(
                        model,
                        test,
                        mode=cfg.eval.mode,
                        seed=cfg.eval.seed,
                        beta=beta,
                        noise_seed=cfg.eval.noise_seed,
                        d_min=cfg.eval.d_min,
                    )
                    per_beta[beta].append(summary)
        rows[strategy] = [{"beta": b, **_percent(mean_depth_metrics(per_beta[b]))} for b in betas]

    deg = {}  # last noise level against the first; positive means worse
    for strategy, table in rows.items():
        first, last = table[0], table[-1]
        deg[strategy] = {
            "absrel": last["absrel"] - first["absrel"],
            "delta1": first["delta1"] - last["delta1"],
            "delta2": first["delta2"] - last["delta2"],
        }
    return {
        "betas": list(betas),
        "strategies": list(strategies),
        "seeds": list(seeds),
        "random_draws": cfg.eval.random_draws,
        "mode": cfg.eval.mode,
        "n_test": len(test_ids),
        "rows": rows,
        "degradation": deg,
        "checkpoints": hashes,
    }


def _percent(m):
    return {k: 100.0 * getattr(m, k) for k in COLUMNS}


def _cell(v):
    return f"{round(v, 1) + 0.0:.1f}"  # no "-0.0"


def format_table(result):
    strategies = result["strategies"]
    head = "| beta | " + " | ".join(f"{s} AbsRel | {s} d1 | {s} d2" for s in strategies) + " |"
    sep = "|---" * (1 + 3 * len(strategies)) + "|"
    lines = [head, sep]
    for i, beta in enumerate(result["betas"]):
        cells = []
        for s in strategies:
            r = result["rows"][s][i]
            cells += [_cell(r[k]) for k in COLUMNS]
        lines.append(f"| {beta:g} | " + " | ".join(cells) + " |")
    cells = []
    for s in strategies:
        cells += [_cell(result["degradation"][s][k]) for k in COLUMNS]
    lines.append("| degradation | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_ablation(out_dir, result):
    out_dir = Path(out_dir)
    io.write_json(out_dir / "ablation.json", result)
    (out_dir / "ablation.md").write_text(format_table(result), encoding="utf-8")
    return out_dir / "ablation.json"
