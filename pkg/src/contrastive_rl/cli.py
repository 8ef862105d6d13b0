"""Command line: train | evaluate | probe | ablate | export-plots."""

import argparse
import sys

from .ablate import VARIANTS, ablation_matrix
from .config import (AGENT_KINDS, PROFILES, default_config, load_config,
                     save_config)
from .envs import ENV_IDS
from .plots import export_plots
from .probe import probe_state_regression
from .train import evaluate, train


def _add_common(p):
    p.add_argument("--config", help="key=value config file; later flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--env", choices=ENV_IDS)
    p.add_argument("--agent", choices=AGENT_KINDS)
    p.add_argument("--profile", choices=PROFILES, default="desk")
    p.add_argument("--no-curl", action="store_true")
    p.add_argument("--detach-encoder", action="store_true")
    p.add_argument("--first-frame-contrastive", action="store_true")
    p.add_argument("--no-aug-rl", action="store_true")
    p.add_argument("--curl-weight", type=float)
    p.add_argument("--updates-per-step", type=int)
    p.add_argument("--budget", type=int, help="total environment steps")


def resolve_config(args):
    env_id = args.env or "pointmass"
    agent = args.agent or "sac"
    cfg = default_config(env_id, agent, args.profile)
    if args.config:
        cfg = load_config(args.config, base=cfg)
    if args.env:
        cfg.env.id = args.env
    if args.agent:
        cfg.agent.kind = args.agent
    if args.seed is not None:
        cfg.train.seed = args.seed
    if args.no_curl:
        cfg.contrastive.enabled = False
    if args.detach_encoder:
        cfg.train.detach_encoder = True
    if args.first_frame_contrastive:
        cfg.contrastive.first_frame = True
    if args.no_aug_rl:
        cfg.train.no_aug_rl = True
    if args.curl_weight is not None:
        cfg.contrastive.weight = args.curl_weight
    if args.updates_per_step is not None:
        cfg.train.updates_per_step = args.updates_per_step
    if args.budget is not None:
        cfg.train.total_env_steps = args.budget
    if cfg.agent.kind == "state_sac_oracle":
        cfg.contrastive.enabled = False
    return cfg.validate()


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="crl",
        description="Pixel RL with a jointly trained contrastive objective")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training budget")
    _add_common(p_train)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--resume-from", help="checkpoint directory to continue")
    p_train.add_argument("--save-replay", action="store_true",
                         help="store replay + loop state for exact resume")
    p_train.add_argument("--dump-frames", type=int, default=0,
                         help="write the first N frames as PGM images")

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("--episodes", type=int)
    p_eval.add_argument("--seed", type=int)

    p_probe = sub.add_parser("probe", help="state-regression probe of the encoder")
    p_probe.add_argument("checkpoint")
    p_probe.add_argument("--samples", type=int, default=2000)
    p_probe.add_argument("--seed", type=int, default=0)

    p_abl = sub.add_parser("ablate", help="variant x seed training matrix")
    _add_common(p_abl)
    p_abl.add_argument("--out", required=True)
    p_abl.add_argument("--variants", nargs="+", default=["default", "pixel_baseline"],
                       choices=sorted(VARIANTS))
    p_abl.add_argument("--seeds", nargs="+", type=int, default=[1, 2, 3])
    p_abl.add_argument("--workers", type=int, default=2)

    p_plot = sub.add_parser("export-plots",
                            help="write aggregated metric data files and figures")
    p_plot.add_argument("root", help="run directory or ablation output root")
    p_plot.add_argument("--out", required=True)

    args = parser.parse_args(argv)

    if args.command == "train":
        cfg = resolve_config(args)
        if args.save_replay:
            cfg.train.save_replay = True
        if args.dump_frames:
            cfg.train.dump_frames = args.dump_frames
        row, ckpt_path = train(cfg, args.out, resume_from=args.resume_from)
        print(f"final eval {row.eval_mean:.3f} +- {row.eval_std:.3f} "
              f"at env step {row.env_step}; checkpoint at {ckpt_path}")
    elif args.command == "evaluate":
        mean, std = evaluate(args.checkpoint, episodes=args.episodes, seed=args.seed)
        print(f"eval return {mean:.3f} +- {std:.3f}")
    elif args.command == "probe":
        trained, random_ = probe_state_regression(args.checkpoint,
                                                  n_samples=args.samples,
                                                  seed=args.seed)
        print(f"state-regression test MSE: trained {trained:.4f} "
              f"random {random_:.4f} ratio {trained / random_:.3f}")
    elif args.command == "ablate":
        cfg = resolve_config(args)
        results = ablation_matrix(cfg, args.variants, args.seeds, args.out,
                                  max_workers=args.workers)
        for name, vals in results.items():
            import numpy as np
            arr = np.asarray(vals)
            print(f"{name}: {arr.mean():.3f} +- {arr.std():.3f}  ({len(vals)} seeds)")
    elif args.command == "export-plots":
        written = export_plots(args.root, args.out)
        print("\n".join(written))
    return 0


if __name__ == "__main__":
    sys.exit(main())
