"""One executable for the whole pipeline.

Subcommands: gen-data, train, eval, serve-recognizer, serve-robot,
serve-bus, demo, bench.  Exit codes: 0 success, 1 runtime failure,
2 usage error (argparse's own convention).
"""

import argparse
import asyncio
import logging
import sys
import time
from pathlib import Path

import numpy as np

log = logging.getLogger("hiros")


def _parse_class_ids(text):
    if not text or text == "all":
        return tuple(range(27))
    return tuple(int(v) for v in text.split(","))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hiros",
        description="gesture-to-robot-command pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic gesture clips")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--participants", type=int, default=10)
    p.add_argument("--per-class", type=int, default=5,
                   help="clips per class per participant")
    p.add_argument("--classes", default="all",
                   help="comma-separated class ids (default all 27)")
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--size", type=int, default=32, help="frame height/width")
    p.add_argument("--offset-px", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="k-fold cross-validated training")
    p.add_argument("--manifest", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lstm-hidden", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-cv", action="store_true",
                   help="skip cross-validation; fit once on all clips")
    p.add_argument("--out", help="write final checkpoint here")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--prune-recall", type=float, default=None)
    p.add_argument("--sweep", default=None,
                   help="comma-separated clips-per-gesture sizes")
    p.add_argument("--sweep-epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("serve-recognizer", help="stream module on the bus")
    p.add_argument("--model", required=True)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--vote-window", type=int, default=5)
    p.add_argument("--threshold", type=float, default=0.85)
    p.add_argument("--refractory", type=int, default=8)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=None,
                   help="seed for injected clips")

    p = sub.add_parser("serve-robot", help="robot simulator + protocol")
    p.add_argument("--object", default="1.0,0.0")
    p.add_argument("--handover", default="0.0,0.5")

    p = sub.add_parser("serve-bus", help="broker + websocket bridge")
    p.add_argument("--with-console", action="store_true",
                   help="serve the operator console static assets")
    p.add_argument("--console-dir", default=None)

    p = sub.add_parser("demo", help="scripted end-to-end demonstration")
    p.add_argument("--script", default=None,
                   help="demo JSON (omit for the built-in script)")

    p = sub.add_parser("bench", help="streaming throughput and kernel bench")
    p.add_argument("--windows", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)

    return parser


# ---------------------------------------------------------------------------


def cmd_gen_data(args):
    from .dataset import GenSpec, generate, kfold, save_clipset

    spec = GenSpec(
        stage=args.stage, participants=args.participants,
        clips_per_class=args.per_class, frames=args.frames,
        height=args.size, width=args.size, offset_px=args.offset_px,
        class_ids=_parse_class_ids(args.classes), seed=args.seed,
    )
    clips, manifest = generate(spec)
    manifest = save_clipset(clips, manifest, args.out)
    print(f"wrote {len(clips)} clips to {args.out} "
          f"(stage {args.stage}, {len(spec.class_ids)} classes)")
    return 0


def cmd_train(args):
    from .dataset import load_clipset
    from .evaluate import format_accuracy, pooled_cv
    from .model import (ModelConfig, build, clips_to_arrays, cross_validate,
                        save_checkpoint, train_fold)

    clips, manifest = load_clipset(args.manifest)
    spec = manifest.spec
    class_ids = tuple(sorted({e.class_id for e in manifest.entries}))
    config = ModelConfig(
        frames=spec.get("frames", 16), height=spec.get("height", 32),
        width=spec.get("width", 32), channels=spec.get("channels", 1),
        lstm_hidden=args.lstm_hidden, num_classes=len(class_ids),
        class_ids=class_ids, seed=args.seed,
    )
    if not args.no_cv:
        t0 = time.time()
        result = cross_validate(
            clips, manifest, config, k=args.folds, epochs=args.epochs,
            batch=args.batch, lr=args.lr, seed=args.seed,
            workers=args.workers,
        )
        mean, std = pooled_cv(result.fold_accuracies)
        for i, acc in enumerate(result.fold_accuracies):
            print(f"fold {i}: accuracy {acc:.4f}")
        print(f"pooled accuracy: {format_accuracy(mean, std)} "
              f"({time.time() - t0:.0f}s)")
    if args.out:
        x, y = clips_to_arrays(clips)
        label_map = {c: i for i, c in enumerate(class_ids)}
        net = build(config)
        train_fold(net, (x, y), None, epochs=args.epochs, batch=args.batch,
                   lr=args.lr, seed=args.seed, label_map=label_map)
        save_checkpoint(net, args.out)
        print(f"checkpoint written to {args.out}")
    return 0


def cmd_eval(args):
    from .dataset import GenSpec, class_table, load_clipset
    from .evaluate import (accuracy, confusion, confusion_to_csv,
                           confusion_to_json, format_accuracy,
                           format_sweep_table, metrics, prune_by_recall,
                           size_sweep)
    from .model import clips_to_arrays, load_checkpoint

    net = load_checkpoint(args.model)
    clips, manifest = load_clipset(args.manifest)
    x, y = clips_to_arrays(clips)
    preds_cols = net.predict(x).argmax(axis=1)
    ids = net.class_ids
    preds = np.array([ids[c] for c in preds_cols])
    k = 27
    cm = confusion(preds, y, k)
    table = class_table()
    labels = [c.label for c in table]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "confusion.csv").write_text(confusion_to_csv(cm, labels))
    (out_dir / "confusion.json").write_text(confusion_to_json(cm, labels))
    print(f"accuracy: {accuracy(cm):.4f} over {len(y)} clips")
    m = metrics(cm)
    present = sorted(set(int(v) for v in y))
    for cid in present:
        print(f"  {labels[cid]:>24}: precision {m.precision[cid]:.3f} "
              f"recall {m.recall[cid]:.3f}")
    if args.prune_recall is not None:
        retained, restricted = prune_by_recall(cm, table, args.prune_recall)
        dropped = [labels[c.id] for c in table
                   if c.id in present and c.id not in retained]
        print(f"pruning at recall < {args.prune_recall}: dropped {dropped}")
        print(f"restricted accuracy: {restricted:.4f}")
    if args.sweep:
        sizes = [int(s) for s in args.sweep.split(",")]
        spec = manifest.spec
        template = GenSpec.from_dict(spec) if spec else GenSpec()
        reports = []
        for stage in (1, 2):
            rep = size_sweep(
                sizes, stage, net.config, gen_template=template,
                epochs=args.sweep_epochs, seed=args.seed,
            )
            reports.append(rep)
            (out_dir / f"sweep_stage{stage}.json").write_text(rep.to_json())
            (out_dir / f"sweep_stage{stage}.csv").write_text(rep.to_csv())
        print(format_sweep_table(reports))
    return 0


def cmd_serve_recognizer(args):
    from .model import load_checkpoint
    from .services import recognizer_service
    from .stream import SmootherConfig

    net = load_checkpoint(args.model)
    cfg = SmootherConfig(vote_window=args.vote_window,
                         emit_threshold=args.threshold,
                         refractory=args.refractory, stride=args.stride)
    asyncio.run(recognizer_service(net, cfg, inject_fps=args.fps,
                                   inject_seed=args.seed))
    return 0


def cmd_serve_robot(args):
    from .robotsim import RobotSim
    from .services import protocol_service, robot_service

    ox, oy = (float(v) for v in args.object.split(","))
    hx, hy = (float(v) for v in args.handover.split(","))
    sim = RobotSim(object_pose=(ox, oy), handover_pose=(hx, hy))

    async def main():
        await asyncio.gather(robot_service(sim), protocol_service())

    asyncio.run(main())
    return 0


def cmd_serve_bus(args):
    from .bus import Broker, WsBridge, broker_address
    from .bus.wsbridge import ws_port

    static_dir = None
    if args.with_console:
        static_dir = args.console_dir or _default_console_dir()
        if static_dir is None:
            print("console assets not found; build frontend/ first",
                  file=sys.stderr)
            return 1

    async def main():
        host, port = broker_address()
        broker = await Broker(host=host, port=port).start()
        bridge = await WsBridge(port=ws_port(), broker_host=host,
                                broker_port=broker.port,
                                static_dir=static_dir).start()
        print(f"bus on {host}:{broker.port}, websocket bridge on "
              f":{bridge.port}" + (f" (console from {static_dir})"
                                   if static_dir else ""))
        await broker.serve_forever()

    asyncio.run(main())
    return 0


def _default_console_dir():
    for candidate in (
        Path(__file__).resolve().parent.parent.parent / "frontend" / "dist",
        Path.cwd() / "frontend" / "dist",
    ):
        if (candidate / "index.html").is_file():
            return candidate
    return None


def cmd_demo(args):
    from .demo import run_demo

    code, failures = run_demo(args.script)
    if failures:
        for failure in failures:
            print(f"FAIL: {failure}", file=sys.stderr)
    else:
        print("demo passed")
    return code


def cmd_bench(args):
    from . import kernels
    from .model import ModelConfig, build
    from .stream import SmootherConfig, StreamingRecognizer

    rng = np.random.default_rng(args.seed)
    net = build(ModelConfig(seed=args.seed))
    rec = StreamingRecognizer(net, SmootherConfig(stride=1))
    frame = rng.integers(0, 256, size=(32, 32, 1), dtype=np.uint8)
    # prime the ring
    for _ in range(net.config.frames):
        rec.push_frame(frame)
    t0 = time.perf_counter()
    for _ in range(args.windows):
        rec.push_frame(rng.integers(0, 256, size=(32, 32, 1), dtype=np.uint8))
    dt = time.perf_counter() - t0
    wps = args.windows / dt
    print(f"streaming inference: {wps:.1f} windows/sec "
          f"({kernels.active_backend()} kernels, default 16x32x32 config)")

    # backend comparison on the two conv layers of the default net
    x1 = rng.normal(size=(1, 1, 16, 32, 32))
    k1 = rng.normal(size=(8, 1, 3, 3, 3))
    x2 = rng.normal(size=(1, 8, 8, 16, 16))
    k2 = rng.normal(size=(16, 8, 3, 3, 3))
    for name in kernels.available_backends():
        be = kernels.get_backend(name)
        reps = 20
        t0 = time.perf_counter()
        for _ in range(reps):
            y1 = be.conv3d_forward(x1, k1, (1, 1, 1), (1, 1, 1))
            y2 = be.conv3d_forward(x2, k2, (1, 1, 1), (1, 1, 1))
        fwd = (time.perf_counter() - t0) / reps
        t0 = time.perf_counter()
        for _ in range(reps):
            be.conv3d_backward_kernel(x1, y1, k1.shape, (1, 1, 1), (1, 1, 1))
            be.conv3d_backward_input(k1, y1, x1.shape, (1, 1, 1), (1, 1, 1))
            be.conv3d_backward_kernel(x2, y2, k2.shape, (1, 1, 1), (1, 1, 1))
            be.conv3d_backward_input(k2, y2, x2.shape, (1, 1, 1), (1, 1, 1))
        bwd = (time.perf_counter() - t0) / reps
        print(f"  conv3d {name:>6}: forward {fwd * 1e3:6.2f} ms/clip, "
              f"backward {bwd * 1e3:6.2f} ms/clip")
    if wps < 30:
        print("note: below the 30 windows/sec soft target on this machine")
    return 0


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "serve-recognizer": cmd_serve_recognizer,
    "serve-robot": cmd_serve_robot,
    "serve-bus": cmd_serve_bus,
    "demo": cmd_demo,
    "bench": cmd_bench,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return _HANDLERS[args.command](args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # runtime failures exit 1, not a traceback wall
        if args.verbose:
            log.exception("command failed")
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
