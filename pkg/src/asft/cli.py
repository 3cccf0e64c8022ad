"""Command-line pipeline: train / subspace / posterior / finetune / cross-eval /
similarity / report.

Every command writes its outputs plus a run manifest (full flag echo, seeds,
library versions, input digests) into --out.  Exit codes: 0 success, 2 for
usage/config problems, 3 for numeric failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, finetune, posterior, qoi, subspace, toygen
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .errors import ConfigurationError, NumericError
from .numkit import SeededRng

EXIT_USAGE = 2
EXIT_NUMERIC = 3


# ---------------------------------------------------------------------------
# Checkpoint adapters


def save_model(path, model: toygen.ToyVae, train_meta: dict) -> None:
    meta = {
        "kind": "toy-vae",
        "grammar_length": model.grammar.length,
        "latent_dim": model.latent_dim,
        "hidden_dim": model.hidden_dim,
        "train": train_meta,
    }
    save_checkpoint(path, {"values": model.partition.values}, meta)


def load_model(path) -> tuple[toygen.ToyVae, dict]:
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "toy-vae":
        raise CheckpointError(f"{path}: not a model checkpoint")
    model = toygen.build_vae(
        toygen.Grammar(length=int(meta["grammar_length"])),
        latent_dim=int(meta["latent_dim"]),
        hidden_dim=int(meta["hidden_dim"]),
    )
    values = arrays["values"]
    if values.shape != model.partition.values.shape:
        raise CheckpointError(f"{path}: parameter count mismatch")
    model.partition.values = values
    return model, meta


def save_subspace(path, sub: subspace.ActiveSubspace) -> None:
    cfg = sub.config
    meta = {"kind": "active-subspace"}
    if cfg is not None:
        meta["build"] = {"n": cfg.n, "k": cfg.k, "sigma0": cfg.sigma0, "seed": cfg.seed}
    save_checkpoint(
        path,
        {"projection": sub.projection, "eigenvalues": sub.eigenvalues, "anchor": sub.anchor},
        meta,
    )


def load_subspace(path) -> subspace.ActiveSubspace:
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "active-subspace":
        raise CheckpointError(f"{path}: not a subspace checkpoint")
    cfg = None
    if "build" in meta:
        b = meta["build"]
        cfg = subspace.SubspaceBuildConfig(
            n=int(b["n"]), k=int(b["k"]), sigma0=float(b["sigma0"]), seed=int(b["seed"])
        )
    return subspace.ActiveSubspace(
        arrays["projection"], arrays["eigenvalues"], arrays["anchor"], cfg
    )


# ---------------------------------------------------------------------------
# Manifests and small writers


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, flags: dict, inputs: list, outputs: list) -> None:
    manifest = {
        "command": command,
        "asft_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "python_version": sys.version.split()[0],
        "flags": {k: v for k, v in sorted(flags.items()) if k not in ("func", "config")},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace_csv(path, trace: finetune.RunTrace) -> None:
    rows = [
        [r.index, _fmt(r.qoi), _fmt(r.kl), str(r.feasible).lower(), _fmt(r.best_so_far),
         _fmt(r.wall_ms)]
        for r in trace.records
    ]
    _write_csv(path, ["eval_index", "qoi", "kl", "feasible", "best_so_far", "wall_ms"], rows)


def write_trace_json(path, trace: finetune.RunTrace, extra: dict) -> None:
    payload = dict(extra)
    payload.update(
        {
            "method": trace.method,
            "delta_kl": trace.delta_kl,
            "no_feasible_init": trace.no_feasible_init,
            "records": [
                {
                    "eval_index": r.index,
                    "phase": r.phase,
                    "qoi": r.qoi,
                    "kl": r.kl,
                    "feasible": r.feasible,
                    "best_so_far": r.best_so_far,
                    "wall_ms": r.wall_ms,
                    "mu": r.mu.tolist(),
                    "sigma": r.sigma.tolist(),
                }
                for r in trace.records
            ],
        }
    )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def _parse_seed_list(text: str) -> list[int]:
    """'0..9' (inclusive range), '3,5,7', or a single integer."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in text.split(",") if part.strip()]


def _max_workers(n_tasks: int) -> int:
    raw = os.environ.get("ASFT_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap <= 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))


def _load_dataset_for(model_path: Path, dataset_flag: str | None, length: int):
    path = Path(dataset_flag) if dataset_flag else model_path.parent / "corpus.txt"
    if not path.exists():
        raise ConfigurationError(f"dataset file not found: {path}")
    return toygen.load_dataset(path, length), path


# ---------------------------------------------------------------------------
# Commands


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = toygen.sample_dataset(SeededRng(args.dataset_seed), args.dataset_size)
    cfg = toygen.TrainConfig(
        lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, seed=args.train_seed
    )
    model, record = toygen.train_vae(dataset, cfg)
    corpus = out / "corpus.txt"
    toygen.save_dataset(corpus, dataset)
    ckpt = out / "model.asft"
    save_model(
        ckpt,
        model,
        {
            "lr": cfg.lr,
            "batch_size": cfg.batch_size,
            "epochs": cfg.epochs,
            "seed": cfg.seed,
            "dataset_size": args.dataset_size,
            "dataset_seed": args.dataset_seed,
            "initial_loss": record.initial,
            "final_loss": record.final,
        },
    )
    write_manifest(out, "train", vars(args), [], [ckpt, corpus])
    print(f"wrote {ckpt} (final loss {record.final:.4f})")
    return 0


def cmd_subspace(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_path = Path(args.model)
    model, _ = load_model(model_path)
    dataset, dataset_path = _load_dataset_for(model_path, args.dataset, model.grammar.length)
    cfg = subspace.SubspaceBuildConfig(
        n=args.samples, k=args.dim, sigma0=args.sigma0, seed=args.subspace_seed
    )
    sub = subspace.build_active_subspace(model, dataset, cfg)
    ckpt = out / "subspace.asft"
    save_subspace(ckpt, sub)
    spectrum = out / "spectrum.csv"
    _write_csv(
        spectrum,
        ["index", "eigenvalue"],
        [[i, _fmt(v)] for i, v in enumerate(sub.eigenvalues)],
    )
    write_manifest(out, "subspace", vars(args), [model_path, dataset_path], [ckpt, spectrum])
    print(f"wrote {ckpt} (top eigenvalue {sub.eigenvalues[0]:.4f})")
    return 0


def cmd_posterior(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_path, sub_path = Path(args.model), Path(args.subspace)
    model, _ = load_model(model_path)
    sub = load_subspace(sub_path)
    dataset, dataset_path = _load_dataset_for(model_path, args.dataset, model.grammar.length)
    cfg = posterior.ViConfig(
        prior_stddev=args.prior_stddev,
        lr=args.vi_lr,
        iterations=args.vi_iterations,
        batch_size=args.batch_size,
        mc_samples=args.mc_samples,
        seed=args.vi_seed,
    )
    post, trace = posterior.fit_posterior(model, sub, dataset, cfg)
    post_path = out / "posterior.json"
    posterior.save_posterior(post_path, post, cfg.prior_stddev, cfg.seed)
    loss_path = out / "loss_trace.csv"
    _write_csv(loss_path, ["iteration", "loss"], [[i, _fmt(v)] for i, v in enumerate(trace)])
    write_manifest(
        out, "posterior", vars(args), [model_path, sub_path, dataset_path],
        [post_path, loss_path],
    )
    print(f"wrote {post_path} (final smoothed loss {np.mean(trace[-100:]):.4f})")
    return 0


def _run_single_finetune(task) -> dict:
    (model, sub, post, space, args, q_seed, trial) = task
    design = qoi.generate_design_set(model.latent_dim, args.q_size, q_seed)
    qcfg = qoi.QoIConfig(
        property_name=args.property, top_fraction=args.top_fraction, m_models=args.m_models
    )
    ptm_report = qoi.evaluate_ptm_qoi(model, design, qcfg)
    opt_seed = args.opt_seed + trial
    objective = qoi.QoiObjective(
        model,
        sub,
        design,
        qcfg,
        seed=q_seed * 100003 + opt_seed,
        common_random_numbers=args.common_random_numbers,
    )
    delta = (
        finetune.default_delta_kl(space)
        if args.delta_kl == "auto"
        else float(args.delta_kl)
    )
    cfg = finetune.FinetuneConfig(
        delta_kl=delta,
        budget=args.budget,
        init_candidates=args.init_candidates,
        bo_iterations=args.budget - args.init_candidates,
        acquisition=args.acquisition,
        reinforce_iterations=args.budget,
        reinforce_lr=args.reinforce_lr,
        reinforce_m=args.m_models,
        use_baseline=args.reinforce_baseline,
        exact_constraint=args.exact_constraint,
        seed=opt_seed,
    )
    rng = SeededRng(opt_seed, stream=q_seed)
    if args.method == "bo":
        trace = finetune.bo_optimize(objective, space, cfg, rng)
    else:
        trace = finetune.reinforce_optimize(objective, space, cfg, rng)
    best = trace.best()
    return {
        "q_seed": q_seed,
        "trial": trial,
        "trace": trace,
        "delta_kl": delta,
        "qoi_ptm": ptm_report.qoi,
        "best_qoi": best.qoi if best else float("nan"),
        "improvement": (best.qoi - ptm_report.qoi) if best else float("nan"),
        "opt_seed": opt_seed,
    }


def cmd_finetune(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_path, sub_path, post_path = Path(args.model), Path(args.subspace), Path(args.posterior)
    model, _ = load_model(model_path)
    sub = load_subspace(sub_path)
    post, _ = posterior.load_posterior(post_path)
    if post.k != sub.k:
        raise ConfigurationError(f"posterior k={post.k} does not match subspace k={sub.k}")
    space = finetune.make_design_space(post)
    model.partition.values.flags.writeable = False

    q_seeds = _parse_seed_list(args.q_seed)
    tasks = [
        (model, sub, post, space, args, q_seed, trial)
        for q_seed in q_seeds
        for trial in range(args.trials)
    ]
    workers = _max_workers(len(tasks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_single_finetune, tasks))
    else:
        results = [_run_single_finetune(t) for t in tasks]

    outputs = []
    summary_rows = []
    for res in results:
        stem = f"trace_{args.property}_{args.method}_q{res['q_seed']}_t{res['trial']}"
        csv_path = out / f"{stem}.csv"
        json_path = out / f"{stem}.json"
        write_trace_csv(csv_path, res["trace"])
        write_trace_json(
            json_path,
            res["trace"],
            {
                "property": args.property,
                "q_seed": res["q_seed"],
                "trial": res["trial"],
                "opt_seed": res["opt_seed"],
                "q_size": args.q_size,
                "qoi_ptm": res["qoi_ptm"],
                "best_qoi": res["best_qoi"],
                "improvement": res["improvement"],
            },
        )
        outputs.extend([csv_path, json_path])
        summary_rows.append(
            [
                args.property,
                args.method,
                res["q_seed"],
                res["trial"],
                _fmt(res["delta_kl"]),
                _fmt(res["qoi_ptm"]),
                _fmt(res["best_qoi"]),
                _fmt(res["improvement"]),
            ]
        )
    summary = out / f"improvement_{args.property}_{args.method}.csv"
    _write_csv(
        summary,
        ["property", "method", "q_seed", "trial", "delta_kl", "qoi_ptm", "best_qoi",
         "improvement"],
        summary_rows,
    )
    outputs.append(summary)
    write_manifest(
        out,
        "finetune",
        {**vars(args), "resolved_delta_kl": results[0]["delta_kl"] if results else None},
        [model_path, sub_path, post_path],
        outputs,
    )
    imps = [r["improvement"] for r in results if np.isfinite(r["improvement"])]
    med = float(np.median(imps)) if imps else float("nan")
    print(f"{len(results)} runs; median improvement {med:.4f}; wrote {summary}")
    return 0


def cmd_cross_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_path, sub_path = Path(args.model), Path(args.subspace)
    model, _ = load_model(model_path)
    sub = load_subspace(sub_path)
    post, _ = posterior.load_posterior(Path(args.posterior))
    dist_paths = sorted(Path(args.dists).glob("*.json")) if Path(args.dists).is_dir() else [
        Path(p) for p in args.dists.split(",")
    ]
    if not dist_paths:
        raise ConfigurationError(f"no distribution files found under {args.dists}")
    dists = []
    for p in dist_paths:
        d, _ = posterior.load_posterior(p)
        dists.append((p.stem, d))
    seeds = _parse_seed_list(args.design_seeds)
    qcfg = qoi.QoIConfig(
        property_name=args.property, top_fraction=args.top_fraction, m_models=args.m_models
    )
    rows = []
    for qi, q_seed in enumerate(seeds):
        design = qoi.generate_design_set(model.latent_dim, args.q_size, q_seed)
        ptm_qoi = qoi.evaluate_ptm_qoi(model, design, qcfg).qoi
        post_qoi = qoi.evaluate_dist_qoi(
            model, sub, post, design, qcfg, SeededRng(args.eval_seed, stream=qi)
        ).qoi
        for di, (name, dist) in enumerate(dists):
            if np.all(dist.stddev == 0.0):
                val = qoi.evaluate_dist_qoi(
                    model, sub, dist, design, qcfg,
                    SeededRng(args.eval_seed, stream=1000 + qi),
                    omegas=np.tile(dist.mean, (qcfg.m_models, 1)),
                ).qoi
            else:
                val = qoi.evaluate_dist_qoi(
                    model, sub, dist, design, qcfg,
                    SeededRng(args.eval_seed, stream=(di + 1) * 10000 + qi),
                ).qoi
            rows.append([name, q_seed, "ptm", _fmt(val), _fmt(ptm_qoi), _fmt(val - ptm_qoi)])
            rows.append(
                [name, q_seed, "posterior", _fmt(val), _fmt(post_qoi), _fmt(val - post_qoi)]
            )
    out_csv = out / f"cross_eval_{args.property}.csv"
    _write_csv(
        out_csv,
        ["distribution", "q_seed", "baseline", "qoi", "baseline_qoi", "improvement"],
        rows,
    )
    write_manifest(
        out, "cross-eval", vars(args),
        [model_path, sub_path, Path(args.posterior), *dist_paths], [out_csv],
    )
    print(f"wrote {out_csv} ({len(rows)} rows)")
    return 0


def _write_grid_csv(path, grid: np.ndarray) -> None:
    rows = [
        [i + 1, j + 1, _fmt(grid[i, j])]
        for i in range(grid.shape[0])
        for j in range(grid.shape[1])
    ]
    _write_csv(path, ["i", "j", "sim"], rows)


def cmd_similarity(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sub_a = load_subspace(Path(args.a))
    sub_b = load_subspace(Path(args.b))
    if sub_a.dim != sub_b.dim:
        raise ConfigurationError(f"ambient dims differ: {sub_a.dim} vs {sub_b.dim}")
    k = min(sub_a.k, sub_b.k) if args.k is None else args.k
    outputs = []
    grid = subspace.similarity_grid(sub_a.projection, sub_b.projection, k)
    as_path = out / "similarity_as.csv"
    _write_grid_csv(as_path, grid)
    outputs.append(as_path)
    if args.random_baseline:
        d_s, k_r, seed_text = args.random_baseline
        seeds = _parse_seed_list(seed_text)
        if len(seeds) % 2:
            raise ConfigurationError("--random-baseline needs an even seed count (pairs)")
        means = []
        for a_seed, b_seed in zip(seeds[0::2], seeds[1::2]):
            ra = subspace.random_subspace(int(d_s), int(k_r), SeededRng(a_seed))
            rb = subspace.random_subspace(int(d_s), int(k_r), SeededRng(b_seed))
            g = subspace.similarity_grid(ra.projection, rb.projection, int(k_r))
            p = out / f"similarity_random_{a_seed}_{b_seed}.csv"
            _write_grid_csv(p, g)
            outputs.append(p)
            means.append(float(g[-1, -1]))
        print(f"random-vs-random sim(k,k) mean {np.mean(means):.5f}")
    write_manifest(out, "similarity", vars(args), [Path(args.a), Path(args.b)], outputs)
    print(f"wrote {as_path}")
    return 0


def cmd_report(args) -> int:
    runs = Path(args.runs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sidecars = sorted(runs.rglob("trace_*.json"))
    if not sidecars:
        raise ConfigurationError(f"no trace sidecars under {runs}")
    groups: dict[tuple[str, str], list[dict]] = {}
    for path in sidecars:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        key = (payload["property"], payload["method"])
        groups.setdefault(key, []).append(payload)

    summary_rows = []
    outputs = []
    quantile_levels = [0.0, 0.25, 0.5, 0.75, 1.0]
    for (prop, method), items in sorted(groups.items()):
        best = np.array([it["best_qoi"] for it in items], dtype=float)
        imp = np.array([it["improvement"] for it in items], dtype=float)
        summary_rows.append(
            [
                "toy-vae",
                method,
                prop,
                _fmt(np.mean(best)),
                _fmt(np.std(best, ddof=1) if best.size > 1 else 0.0),
            ]
        )
        imp_path = out / f"improvement_{prop}_{method}.dat"
        with open(imp_path, "w", encoding="utf-8") as fh:
            for i, v in enumerate(imp):
                fh.write(f"{i} {_fmt(v)}\n")
        quant_path = out / f"quantiles_{prop}_{method}.dat"
        with open(quant_path, "w", encoding="utf-8") as fh:
            for q in quantile_levels:
                fh.write(f"{q} {_fmt(np.quantile(imp, q))}\n")
        outputs.extend([imp_path, quant_path])
    summary = out / "summary.csv"
    _write_csv(summary, ["model", "method", "property", "mean", "stddev"], summary_rows)
    outputs.append(summary)
    write_manifest(out, "report", vars(args), sidecars, outputs)
    print(f"wrote {summary} ({len(summary_rows)} groups)")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asft",
        description="Active-subspace fine-tuning pipeline for the toy sequence VAE.",
    )
    parser.add_argument("--config", help="JSON file with default flag values (flags win)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the toy VAE (the PTM)")
    p.add_argument("--out", required=True)
    p.add_argument("--dataset-size", type=int, default=toygen.DEFAULT_DATASET_SIZE)
    p.add_argument("--dataset-seed", type=int, default=toygen.DEFAULT_DATASET_SEED)
    p.add_argument("--train-seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=toygen.TrainConfig.epochs)
    p.add_argument("--lr", type=float, default=toygen.TrainConfig.lr)
    p.add_argument("--batch-size", type=int, default=toygen.TrainConfig.batch_size)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("subspace", help="build the active subspace of the decoder block")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", help="corpus file (default: corpus.txt next to the model)")
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--sigma0", type=float, default=0.05)
    p.add_argument("--subspace-seed", type=int, default=0)
    p.set_defaults(func=cmd_subspace)

    p = sub.add_parser("posterior", help="variational posterior over subspace coordinates")
    p.add_argument("--model", required=True)
    p.add_argument("--subspace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset")
    p.add_argument("--vi-seed", type=int, default=0)
    p.add_argument("--vi-iterations", type=int, default=2000)
    p.add_argument("--vi-lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--prior-stddev", type=float, default=5.0)
    p.add_argument("--mc-samples", type=int, default=1)
    p.set_defaults(func=cmd_posterior)

    p = sub.add_parser("finetune", help="optimize the subspace distribution for a property")
    p.add_argument("--model", required=True)
    p.add_argument("--subspace", required=True)
    p.add_argument("--posterior", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("bo", "reinforce"), default="bo")
    p.add_argument("--property", choices=toygen.PROPERTIES, default="toy-logp")
    p.add_argument("--budget", type=int, default=30)
    p.add_argument("--init-candidates", type=int, default=5)
    p.add_argument("--acquisition", choices=("ei", "nei"), default="ei")
    p.add_argument("--delta-kl", default="auto", help="'auto' (70%% of max corner KL) or a value")
    p.add_argument("--q-seed", default="0", help="design-set seeds: N, 'a..b', or comma list")
    p.add_argument("--q-size", type=int, default=1000)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--opt-seed", type=int, default=0)
    p.add_argument("--top-fraction", type=float, default=0.10)
    p.add_argument("--m-models", type=int, default=10)
    p.add_argument("--reinforce-lr", type=float, default=0.005)
    p.add_argument("--reinforce-baseline", action="store_true")
    p.add_argument("--common-random-numbers", action="store_true")
    p.add_argument("--exact-constraint", action="store_true")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("cross-eval", help="evaluate fine-tuned distributions on fresh designs")
    p.add_argument("--model", required=True)
    p.add_argument("--subspace", required=True)
    p.add_argument("--posterior", required=True)
    p.add_argument("--dists", required=True, help="directory of posterior-format JSONs, or comma list")
    p.add_argument("--out", required=True)
    p.add_argument("--design-seeds", default="100,101,102")
    p.add_argument("--property", choices=toygen.PROPERTIES, default="toy-logp")
    p.add_argument("--q-size", type=int, default=1000)
    p.add_argument("--top-fraction", type=float, default=0.10)
    p.add_argument("--m-models", type=int, default=10)
    p.add_argument("--eval-seed", type=int, default=0)
    p.set_defaults(func=cmd_cross_eval)

    p = sub.add_parser("similarity", help="subspace similarity grids")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int)
    p.add_argument(
        "--random-baseline",
        nargs=3,
        metavar=("D", "K", "SEEDS"),
        help="also emit random-vs-random grids at ambient dim D, rank K, paired seeds",
    )
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("report", help="aggregate finetune traces into summary tables")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # first pass just for --config so file values become overridable defaults
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            with open(known.config, encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"asft: cannot read config file: {exc}", file=sys.stderr)
            return EXIT_USAGE
        if not isinstance(overrides, dict):
            print("asft: config file must hold a JSON object", file=sys.stderr)
            return EXIT_USAGE
        keyed = {k.replace("-", "_"): v for k, v in overrides.items()}
        for sub_parser in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
            dests = {a.dest for a in sub_parser._actions}  # noqa: SLF001
            sub_parser.set_defaults(**{k: v for k, v in keyed.items() if k in dests})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, CheckpointError, ValueError, FileNotFoundError) as exc:
        print(f"asft: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"asft: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
