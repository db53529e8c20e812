"""Command line front end: train, eval, oracle-tests, render-dump."""

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from bicup.config import ConfigError, apply_override, parse_config, parse_config_text
from bicup.env import BallInCupEnv, frame_to_pgm
from bicup.gated import ParamStore
from bicup.nn.checkpoint import load_params
from bicup.oracles import run_all
from bicup.runner import _obs_dict, build_engine, evaluate, run_experiment

OUT_DIR_ENV = "BICUP_OUT"

log = logging.getLogger("bicup.cli")


def _cmd_train(args) -> int:
    cfg = parse_config(args.config)
    for assignment in args.set:
        cfg = apply_override(cfg, assignment)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    out_override = os.environ.get(OUT_DIR_ENV)
    if out_override:
        cfg = dataclasses.replace(cfg, out_dir=out_override)
    cfg.validate()
    run_experiment(cfg)
    return 0


def _load_checkpoint(path: str):
    tree, meta = load_params(path)
    cfg = parse_config_text(meta["config"], name=f"{path}(config)")
    store = ParamStore.from_tree(tree)
    return cfg, store, build_engine(cfg)


def _pick_task(cfg, label):
    tasks = cfg.task_specs()
    if label is None:
        # default to the catch task when present
        for t in tasks:
            if t.reward_id == 5:
                return t
        return tasks[0]
    by_label = {t.label: t for t in tasks}
    if label.strip().upper() not in by_label:
        raise SystemExit(f"task {label!r} not in checkpoint tasks "
                         f"{sorted(by_label)}")
    return by_label[label.strip().upper()]


def _cmd_eval(args) -> int:
    cfg, store, engine = _load_checkpoint(args.checkpoint)
    task = _pick_task(cfg, args.task)
    env = BallInCupEnv(cfg.env)
    rng = np.random.default_rng(args.seed)
    returns = []
    for ep in range(args.episodes):
        res = evaluate(env, engine, store.actor, task, rng, cfg.episode_len)
        returns.append(res.eval_return)
        print(f"episode {ep}  task {task.label}  return {res.eval_return:.3f}"
              f"  catch {int(res.catch)}  first_catch_step {res.first_catch_step}")
    print(f"mean return over {args.episodes} episodes: "
          f"{float(np.mean(returns)):.3f}")
    return 0


def _cmd_render_dump(args) -> int:
    cfg, store, engine = _load_checkpoint(args.checkpoint)
    task = _pick_task(cfg, args.task)
    env = BallInCupEnv(cfg.env)
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    obs = env.reset(rng)
    frame_to_pgm(env.newest_frame, out / "frame_0000.pgm")
    written = 1
    for step in range(1, args.steps + 1):
        pol, _ = engine.actor_forward(store.actor, _obs_dict(obs), task)
        obs, _, aborted = env.step(pol.mean[0])
        if aborted:
            break
        frame_to_pgm(env.newest_frame, out / f"frame_{step:04d}.pgm")
        written += 1
    print(f"wrote {written} frames for task {task.label} to {out}")
    return 0


def _cmd_oracle_tests(args) -> int:
    results = run_all(instances=args.instances, seed=args.seed)
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        ok = ok and r.passed
        print(f"{status} {r.name}: max err {r.worst:.3e} "
              f"(tol {r.tol:g}; {r.detail})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bicup",
        description="Multi-task RL on a planar ball-in-a-cup rig.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run an experiment from a config file")
    p.add_argument("config", help="path to a key = value config file")
    p.add_argument("--seed", type=int, default=None,
                   help="train this single seed instead of the config's list")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field (repeatable)")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one task")
    p.add_argument("checkpoint", help="path to a .npz checkpoint")
    p.add_argument("task", nargs="?", default=None,
                   help="task label, e.g. 5F (default: the catch task)")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("oracle-tests",
                       help="run the gradient and return-target oracles")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_oracle_tests)

    p = sub.add_parser("render-dump",
                       help="roll out the mean policy and dump PGM frames")
    p.add_argument("checkpoint", help="path to a .npz checkpoint")
    p.add_argument("--task", default=None, help="task label, e.g. 5F")
    p.add_argument("--out", default="frames", help="output directory")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_render_dump)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
