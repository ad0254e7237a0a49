"""Command-line entry points: gen-data | train | ablate | guide | serve.

Every run writes a <artifact>.manifest.json with seeds, input/output
hashes and versions. Exit codes: 0 ok, 2 usage, 3 balancing failure,
4 file format/version, 5 training diverged, 1 anything else.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import dataset as ds
from . import guidance as gd
from . import manifest as mf
from . import model as qm
from . import phantom
from .errors import (
    BalancingError,
    FileFormatError,
    TrainingDivergedError,
    UsguideError,
)

log = logging.getLogger("usguide")

EXIT_BALANCING = 3
EXIT_FILE = 4
EXIT_DIVERGED = 5


def _setup_logging():
    level = os.environ.get("USG_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_phantom(args) -> phantom.PhantomConfig:
    if getattr(args, "phantom", None):
        return phantom.load_config(args.phantom)
    return phantom.PhantomConfig()


def _default_mix(n_traj):
    n_expert = max(1, round(0.2 * n_traj))
    n_novice = max(1, round(0.3 * n_traj))
    n_random = max(1, n_traj - n_expert - n_novice)
    return [
        (ds.DemoPolicy("expert_sweep"), n_expert),
        (ds.DemoPolicy("novice_jitter"), n_novice),
        (ds.DemoPolicy("uniform_random"), n_random),
    ]


def cmd_gen_data(args, argv):
    t0 = time.monotonic()
    config = _load_phantom(args)
    if args.samples % args.steps:
        log.warning("samples rounded down to a multiple of --steps")
    n_traj = args.samples // args.steps
    data = ds.build_dataset(_default_mix(n_traj), config, args.steps,
                            seed=args.seed,
                            target_positive_fraction=args.pos_frac)
    ds.save(data, args.out)
    stats = ds.stats(data)
    print(json.dumps(stats, indent=2))
    mf.write_manifest(args.out + ".manifest.json", "gen-data", argv,
                      {"seed": args.seed}, artifacts=[args.out],
                      wall_clock_s=time.monotonic() - t0,
                      extra={"stats": stats})
    return 0


def cmd_train(args, argv):
    t0 = time.monotonic()
    data = ds.load(args.data)
    train_set, val_set = ds.split(data, args.val_fraction, args.seed)
    norm = ds.norm_stats(train_set)
    h, w, c = data.phantom_config.image_size
    config = qm.ModelConfig(variant=args.variant, image_size=(h, w, c),
                            input_norm=norm)
    model = qm.build(config, args.seed)
    if args.warm_start_epochs > 0:
        log.info("warm-starting image encoder for %d epochs", args.warm_start_epochs)
        qm.pretrain_image_encoder(model, train_set,
                                  qm.TrainConfig(lr=args.lr, batch_size=args.batch,
                                                 epochs=args.warm_start_epochs,
                                                 seed=args.seed))
    report = qm.train(model, train_set, val_set,
                      qm.TrainConfig(lr=args.lr, batch_size=args.batch,
                                     epochs=args.epochs, seed=args.seed))
    qm.save_model(model, args.out)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            f.write(report.to_csv())
    final = report.epochs[-1] if report.epochs else report.initial
    print(f"final train_acc={final['train_acc']:.4f} "
          f"val_acc={final['val_acc']:.4f} confusion={report.confusion}")
    mf.write_manifest(args.out + ".manifest.json", "train", argv,
                      {"seed": args.seed}, inputs=[args.data],
                      artifacts=[args.out],
                      wall_clock_s=time.monotonic() - t0,
                      extra={"final": final, "confusion": report.confusion})
    return 0


def cmd_ablate(args, argv):
    t0 = time.monotonic()
    data = ds.load(args.data)
    train_set, val_set = ds.split(data, args.val_fraction, args.seed)
    norm = ds.norm_stats(train_set)
    h, w, c = data.phantom_config.image_size
    base = qm.ModelConfig(image_size=(h, w, c), input_norm=norm)
    seeds = [args.seed + i for i in range(args.repeats)]
    result = qm.ablate(train_set, val_set, repeats=args.repeats,
                       epochs=args.epochs, seeds=seeds, base_config=base,
                       lr=args.lr, batch_size=args.batch)
    print(f"{'variant':8s} {'repeat':6s} {'val_acc':8s}")
    for row in result["rows"]:
        print(f"{row['variant']:8s} {row['repeat']:<6d} {row['val_acc']:.4f}")
    print(json.dumps(result["summary"], indent=2))
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(result, f, indent=2)
        f.write("\n")
    mf.write_manifest(args.out + ".manifest.json", "ablate", argv,
                      {"seed": args.seed, "repeat_seeds": seeds},
                      inputs=[args.data], artifacts=[args.out],
                      wall_clock_s=time.monotonic() - t0)
    return 0


def cmd_guide(args, argv):
    t0 = time.monotonic()
    model = qm.load_model(args.model)
    data = ds.load(args.data)
    config = data.phantom_config
    experience = gd.harvest(data, args.experience_filter)
    cfg = gd.GuidanceConfig(n_samples=args.n, pose_bound=args.pose_bound,
                            seed=args.seed)
    rng = np.random.default_rng(args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    improved = 0
    artifacts = []
    for ep in range(args.episodes):
        # poor (label-0) starts drawn from the random policy's state box
        while True:
            pose = ds._tilt_quat(rng, 1.1)
            fz = rng.uniform(0.0, 18.0)
            state = phantom.ProbeState(pose, np.array([0, 0, fz, 0, 0, 0.0]))
            if phantom.oracle_quality(state, config)["label"] == 0:
                break
        ep_cfg = gd.GuidanceConfig(n_samples=cfg.n_samples,
                                   pose_bound=cfg.pose_bound,
                                   force_bound=cfg.force_bound,
                                   accept_threshold=cfg.accept_threshold,
                                   early_exit=cfg.early_exit,
                                   seed=args.seed + 1000 * ep)
        result = gd.rollout(model, config, experience, state, args.steps,
                            ep_cfg, render_seed=args.seed + ep)
        first = result["log"][0]["oracle_score"]
        last_state = result["final_state"]
        last = phantom.oracle_quality(last_state, config)["score"]
        improved += int(last > first)
        path = os.path.join(args.out_dir, f"rollout_{ep:03d}.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write(gd.rollout_csv(result))
        artifacts.append(path)
    rate = improved / args.episodes
    print(f"episodes={args.episodes} improved={improved} success_rate={rate:.2f}")
    mf.write_manifest(os.path.join(args.out_dir, "guide.manifest.json"),
                      "guide", argv, {"seed": args.seed},
                      inputs=[args.model, args.data], artifacts=artifacts,
                      wall_clock_s=time.monotonic() - t0,
                      extra={"success_rate": rate})
    return 0


def cmd_serve(args, argv):
    import uvicorn

    from .server import create_app

    model = qm.load_model(args.model)
    experience = None
    config = _load_phantom(args)
    if args.data:
        data = ds.load(args.data)
        experience = gd.harvest(data, args.experience_filter)
        config = data.phantom_config
    app = create_app(model, config, experience)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="usguide",
        description="Synthetic ultrasound scanning guidance toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a labeled phantom dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--samples", type=int, default=6000)
    g.add_argument("--steps", type=int, default=50, help="samples per trajectory")
    g.add_argument("--pos-frac", type=float, default=0.378,
                   help="target positive label fraction")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--phantom", help="phantom_v1 config file")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a quality model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--variant", choices=qm.VARIANTS, default="net4")
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--lr", type=float, default=0.001)
    t.add_argument("--batch", type=int, default=20)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--val-fraction", type=float, default=0.2)
    t.add_argument("--warm-start-epochs", type=int, default=0)
    t.add_argument("--report", help="write per-epoch CSV here")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("ablate", help="train all variants repeatedly")
    a.add_argument("--data", required=True)
    a.add_argument("--out", required=True, help="JSON results path")
    a.add_argument("--repeats", type=int, default=5)
    a.add_argument("--epochs", type=int, default=20)
    a.add_argument("--lr", type=float, default=0.001)
    a.add_argument("--batch", type=int, default=20)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--val-fraction", type=float, default=0.2)
    a.set_defaults(func=cmd_ablate)

    u = sub.add_parser("guide", help="closed-loop rollouts on the phantom")
    u.add_argument("--model", required=True)
    u.add_argument("--data", required=True, help="experience dataset")
    u.add_argument("--episodes", type=int, default=20)
    u.add_argument("--steps", type=int, default=10)
    u.add_argument("--n", type=int, default=1000, help="candidate draws per step")
    u.add_argument("--pose-bound", type=float, default=0.2)
    u.add_argument("--experience-filter", choices=("all", "positives_only"),
                   default="positives_only")
    u.add_argument("--seed", type=int, default=0)
    u.add_argument("--out-dir", default="rollouts")
    u.set_defaults(func=cmd_guide)

    s = sub.add_parser("serve", help="run the session HTTP/WebSocket service")
    s.add_argument("--model", required=True)
    s.add_argument("--data", help="experience dataset (enables /suggest)")
    s.add_argument("--phantom", help="phantom_v1 config file")
    s.add_argument("--experience-filter", choices=("all", "positives_only"),
                   default="positives_only")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8421)
    s.set_defaults(func=cmd_serve)
    return p


def _validate(args, parser):
    if args.command == "gen-data":
        if args.samples < 1:
            parser.error("--samples must be >= 1")
        if args.steps < 1:
            parser.error("--steps must be >= 1")
        if args.pos_frac is not None and not 0 < args.pos_frac <= 1:
            parser.error("--pos-frac must be in (0, 1]")


def main(argv=None):
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(args, parser)
    try:
        return args.func(args, argv)
    except BalancingError as exc:
        log.error("balancing failure: %s", exc)
        return EXIT_BALANCING
    except FileFormatError as exc:
        log.error("file error: %s", exc)
        return EXIT_FILE
    except TrainingDivergedError as exc:
        log.error("training diverged: %s", exc)
        return EXIT_DIVERGED
    except UsguideError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
