"""Scripted end-to-end demonstration over a live bus.

Boots a broker plus the recognizer, protocol and robot services in one
process (still talking over real TCP), injects a gesture-clip sequence
into ``camera/frames`` via the recognizer's clip injector, and asserts
the final robot snapshot against the script's expectations.

Frame cadence is chosen so every window aligns with a full clip replay:
the smoother stride equals the clip length and every injected segment is
a whole number of clips, so the prediction stream is a pure function of
the frame sequence.
"""

import asyncio
import json
import logging
import math
from pathlib import Path

from . import bus as topics
from .bus import Broker, BusClient
from .dataset import GenSpec, class_id_for_label, generate
from .model import ModelConfig, build, clips_to_arrays, load_checkpoint, train_fold
from .robotsim import RobotSim
from .services import protocol_service, recognizer_service, robot_service
from .stream import SmootherConfig

log = logging.getLogger(__name__)

DEFAULT_DEMO_SCRIPT = {
    "train": {
        "classes": ["Start", "Stop", "Resume", "Undo", "Point to an Object",
                    "Come forward", "Move to the right", "Doing nothing"],
        "participants": 4,
        "per_class": 6,
        "epochs": 20,
        "seed": 7,
    },
    "smoother": {"vote_window": 5, "emit_threshold": 0.85,
                 "refractory": 4, "stride": 16},
    "fps": 30,
    "repeats": 5,
    "robot": {"object_pose": [0.25, -0.30], "handover_pose": [0.25, 0.0]},
    "sequence": [
        {"label": "Start"},
        {"label": "Come forward"},
        {"label": "Move to the right"},
        {"label": "Point to an Object"},
        {"label": "Move to the right"},
        {"label": "Resume", "settle_frames": 96},
        {"label": "Undo"},
        {"label": "Stop"},
    ],
    "expect": {
        "base": [0.25, -0.25],
        "attention": "SHUTDOWN",
        "object_at": "handover",
        "tolerance": 1e-9,
    },
    "timeout_s": 90,
}


def train_demo_model(train_spec, height=32, width=32):
    """Small overfit-style model covering exactly the demo vocabulary."""
    classes = tuple(
        class_id_for_label(c) if isinstance(c, str) else int(c)
        for c in train_spec["classes"]
    )
    seed = int(train_spec.get("seed", 7))
    spec = GenSpec(
        stage=2,
        participants=int(train_spec.get("participants", 4)),
        clips_per_class=int(train_spec.get("per_class", 6)),
        height=height, width=width,
        class_ids=classes, seed=seed,
    )
    clips, _ = generate(spec)
    x, y = clips_to_arrays(clips)
    label_map = {c: i for i, c in enumerate(sorted(classes))}
    config = ModelConfig(height=height, width=width,
                         num_classes=len(classes),
                         class_ids=tuple(sorted(classes)), seed=seed)
    net = build(config)
    report = train_fold(
        net, (x, y), None, epochs=int(train_spec.get("epochs", 20)),
        batch=16, lr=1e-3, seed=seed, label_map=label_map,
    )
    log.info("demo model trained: final loss %.4f acc %.3f",
             report.train_loss[-1], report.train_acc[-1])
    return net


class DemoRun:
    def __init__(self, script, script_dir=None):
        self.script = script
        self.script_dir = Path(script_dir) if script_dir else Path.cwd()
        self.predictions = []
        self.attention = None
        self.last_state = None
        self.failures = []

    async def _monitor(self, port, done):
        client = await BusClient.connect(port=port)
        await client.subscribe(topics.TOPIC_PREDICTION)
        await client.subscribe(topics.TOPIC_ATTENTION)
        await client.subscribe(topics.TOPIC_STATE)
        try:
            while True:
                frame = await client.recv()
                if frame is None:
                    break
                body = json.loads(frame.payload)
                if frame.topic == topics.TOPIC_PREDICTION:
                    self.predictions.append(body)
                    log.info("prediction: %s (p=%.2f)", body["label"],
                             body["prob"])
                elif frame.topic == topics.TOPIC_ATTENTION:
                    self.attention = body["attention"]
                elif frame.topic == topics.TOPIC_STATE:
                    self.last_state = body
                    if (
                        self.attention == "SHUTDOWN"
                        and not body["busy"]
                        and len(self.predictions)
                        >= len(self.script["sequence"])
                    ):
                        done.set()
        except (ConnectionError, asyncio.CancelledError):
            pass
        finally:
            await client.close()

    def _check(self, cond, message):
        if not cond:
            self.failures.append(message)

    def evaluate(self):
        expect = self.script["expect"]
        tol = float(expect.get("tolerance", 1e-9))
        seq_labels = [entry["label"] for entry in self.script["sequence"]]
        got_labels = [p["label"] for p in self.predictions]
        self._check(
            got_labels == seq_labels,
            f"prediction sequence {got_labels} != script {seq_labels}",
        )
        self._check(self.attention == expect.get("attention", "SHUTDOWN"),
                    f"attention is {self.attention}")
        state = self.last_state
        self._check(state is not None, "never saw a robot snapshot")
        if state is None:
            return self.failures
        bx, by = expect["base"]
        self._check(
            math.isclose(state["base"]["x"], bx, abs_tol=tol)
            and math.isclose(state["base"]["y"], by, abs_tol=tol),
            f"base at ({state['base']['x']}, {state['base']['y']}), "
            f"expected ({bx}, {by})",
        )
        if expect.get("object_at") == "handover":
            obj = state["world"]["object_pose"]
            hand = state["world"]["handover_pose"]
            self._check(
                obj is not None
                and math.isclose(obj[0], hand[0], abs_tol=tol)
                and math.isclose(obj[1], hand[1], abs_tol=tol),
                f"object at {obj}, expected handover {hand}",
            )
        return self.failures

    async def run(self):
        script = self.script
        broker = await Broker(port=0).start()
        port = broker.port

        if script.get("model"):
            net = load_checkpoint(self.script_dir / script["model"])
            log.info("loaded model %s", script["model"])
        else:
            net = train_demo_model(script["train"])

        smoother = SmootherConfig(
            vote_window=script["smoother"].get("vote_window", 5),
            emit_threshold=script["smoother"].get("emit_threshold", 0.85),
            refractory=script["smoother"].get("refractory", 4),
            stride=script["smoother"].get("stride", 16),
        )
        sim = RobotSim(
            object_pose=tuple(script["robot"]["object_pose"]),
            handover_pose=tuple(script["robot"]["handover_pose"]),
        )
        ready = [asyncio.Event() for _ in range(3)]
        services = [
            asyncio.create_task(recognizer_service(
                net, smoother, port=port, inject_fps=script.get("fps", 30),
                inject_seed=int(script.get("inject_seed", 1234)),
                ready=ready[0],
            )),
            asyncio.create_task(protocol_service(port=port, ready=ready[1])),
            asyncio.create_task(robot_service(sim, port=port, ready=ready[2])),
        ]
        done = asyncio.Event()
        monitor = asyncio.create_task(self._monitor(port, done))
        try:
            await asyncio.gather(*[e.wait() for e in ready])
            driver = await BusClient.connect(port=port)
            repeats = int(script.get("repeats", 5))
            for entry in script["sequence"]:
                await driver.publish_json(topics.TOPIC_INJECT, {
                    "class_id": class_id_for_label(entry["label"]),
                    "repeats": int(entry.get("repeats", repeats)),
                    "settle_frames": int(entry.get("settle_frames", 0)),
                })
            try:
                await asyncio.wait_for(done.wait(),
                                       timeout=script.get("timeout_s", 90))
            except asyncio.TimeoutError:
                self.failures.append(
                    f"demo timed out; predictions so far: "
                    f"{[p['label'] for p in self.predictions]}, "
                    f"attention={self.attention}"
                )
            else:
                await asyncio.sleep(0.3)  # let the last snapshots land
            await driver.close()
        finally:
            monitor.cancel()
            for task in services:
                task.cancel()
            for task in [monitor, *services]:
                try:
                    await task
                except (asyncio.CancelledError, ConnectionError):
                    pass
            await broker.stop()
        return self.evaluate()


def load_script(path=None):
    if path is None:
        return dict(DEFAULT_DEMO_SCRIPT), Path.cwd()
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        return json.load(f), path.parent


def run_demo(script_path=None):
    """Execute the demo; returns (exit_code, failure list)."""
    script, script_dir = load_script(script_path)
    run = DemoRun(script, script_dir)
    failures = asyncio.run(run.run())
    for failure in failures:
        log.error("demo check failed: %s", failure)
    if not failures:
        log.info("demo passed: base %s, attention %s",
                 (run.last_state["base"]["x"], run.last_state["base"]["y"]),
                 run.attention)
    return (0 if not failures else 1), failures
