"""Ablation matrix: the variant x seed cross product on a bounded worker pool.

Each run goes through a subprocess of the CLI so parallel workers get a
single BLAS thread and full isolation; variants share the seed list, so
comparisons are paired on identical environment streams.
"""

import csv
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .config import ExperimentConfig, from_text, save_config, to_text
from .train import train

# Named flag sets from the appendix studies, applied on top of a base config.
VARIANTS = {
    "default": {},
    "no_curl": {"contrastive.enabled": "false"},
    "pixel_baseline": {"contrastive.enabled": "false", "train.no_aug_rl": "true"},
    "detach_encoder": {"train.detach_encoder": "true"},
    "no_aug_rl": {"train.no_aug_rl": "true"},
    "first_frame": {"contrastive.first_frame": "true"},
    "state_oracle": {"agent.kind": "state_sac_oracle", "contrastive.enabled": "false"},
}


def apply_flags(base: ExperimentConfig, flags: dict) -> ExperimentConfig:
    cfg = from_text(to_text(base))  # deep copy through the serializer
    text = "\n".join(f"{k}={v}" for k, v in flags.items())
    return from_text(text, base=cfg).validate()


def _run_subprocess(cfg_path, out_dir):
    env = dict(os.environ)
    env["OPENBLAS_NUM_THREADS"] = "1"
    env["OMP_NUM_THREADS"] = "1"
    cmd = [sys.executable, "-m", "contrastive_rl.cli", "train",
           "--config", cfg_path, "--out", out_dir]
    res = subprocess.run(cmd, env=env, capture_output=True, text=True)
    if res.returncode != 0:
        raise RuntimeError(f"run {out_dir} failed:\n{res.stdout}\n{res.stderr}")


def final_eval_mean(run_dir) -> float:
    with open(os.path.join(run_dir, "metrics.csv")) as f:
        rows = list(csv.DictReader(f))
    return float(rows[-1]["eval_mean"])


def ablation_matrix(base: ExperimentConfig, variant_names, seeds, out_root,
                    max_workers=2, subprocess_runs=True):
    """Run every (variant, seed) pair; returns {variant: [final eval means]}
    and writes ablation.csv with per-variant mean and std."""
    os.makedirs(out_root, exist_ok=True)
    jobs = []
    for name in variant_names:
        if name not in VARIANTS:
            raise ValueError(f"unknown variant {name!r}; expected one of {sorted(VARIANTS)}")
        for seed in seeds:
            cfg = apply_flags(base, VARIANTS[name])
            cfg.train.seed = int(seed)
            run_dir = os.path.join(out_root, name, f"seed{seed}")
            jobs.append((name, seed, cfg, run_dir))

    def launch(job):
        name, seed, cfg, run_dir = job
        if os.path.exists(os.path.join(run_dir, "metrics.csv")):
            return  # already done; matrix is resumable
        os.makedirs(run_dir, exist_ok=True)
        if subprocess_runs:
            cfg_path = os.path.join(run_dir, "run.cfg")
            save_config(cfg, cfg_path)
            _run_subprocess(cfg_path, run_dir)
        else:
            train(cfg, run_dir)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        list(pool.map(launch, jobs))

    results = {}
    for name in variant_names:
        results[name] = [final_eval_mean(os.path.join(out_root, name, f"seed{s}"))
                         for s in seeds]

    with open(os.path.join(out_root, "ablation.csv"), "w") as f:
        f.write("variant,seeds,mean_return,std_return," +
                ",".join(f"seed{s}" for s in seeds) + "\n")
        for name in variant_names:
            vals = np.asarray(results[name])
            f.write(f"{name},{len(seeds)},{vals.mean():.6f},{vals.std():.6f},"
                    + ",".join(f"{v:.6f}" for v in vals) + "\n")
    return results
