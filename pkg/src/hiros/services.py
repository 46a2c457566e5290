"""Bus-facing service loops tying the pipeline together.

Three long-running services mirror the deployed system: the recognizer
consumes ``camera/frames`` and publishes smoothed predictions, the
protocol service turns predictions into robot commands and attention
updates, and the robot service executes commands on the simulator while
publishing its state at 10 Hz.

The recognizer also hosts a clip injector: a control message on
``camera/inject`` plays a synthetic clip of the requested class into
``camera/frames``, standing in for a live camera.
"""

import asyncio
import dataclasses
import json
import logging
import time

import numpy as np

from . import bus as topics
from .bus import BusClient
from .dataset import (
    NOTHING_ID,
    Clip,
    GenSpec,
    decode_clip,
    encode_clip,
    generate,
    scaled_offset_px,
)
from .errors import BusyError, FormatError, ProtocolError
from .protocol import Attention, ControlState, map_prediction, step
from .robotsim import RobotSim
from .stream import StreamingRecognizer

log = logging.getLogger(__name__)


def frame_to_payload(frame_hwc, stage=2):
    """One video frame as a GCLP clip of length 1 (label fields zeroed)."""
    clip = Clip(frame_hwc[np.newaxis], class_id=0, participant_id=0,
                stage=stage, variant_seed=0)
    return encode_clip(clip)


def payload_to_frame(payload):
    clip = decode_clip(payload)
    return clip.frames[0]


class ClipInjector:
    """Generates gesture clips on demand and streams their frames.

    Frames are paced against wall-clock deadlines rather than one sleep
    per frame: event-loop timers are only ~millisecond-accurate, which at
    high fps would otherwise stretch the stream several-fold.
    """

    def __init__(self, client, gen_template, fps=30.0):
        self.client = client
        self.template = gen_template
        self.fps = fps
        self._counter = 0

    async def _send_paced(self, frames_iter):
        loop = asyncio.get_running_loop()
        start = loop.time()
        for sent, frame in enumerate(frames_iter, start=1):
            await self.client.publish(topics.TOPIC_FRAMES,
                                      frame_to_payload(frame))
            behind = start + sent / self.fps - loop.time()
            if behind > 0.002:
                await asyncio.sleep(behind)
            else:
                await asyncio.sleep(0)  # yield so the recognizer keeps up

    async def handle(self, request):
        class_id = int(request["class_id"])
        repeats = int(request.get("repeats", 5))
        settle = int(request.get("settle_frames", 0))
        self._counter += 1
        spec = dataclasses.replace(
            self.template, stage=2, participants=1, clips_per_class=1,
            class_ids=(class_id,), seed=self.template.seed + self._counter,
        )
        clips, _ = generate(spec)
        frames = clips[0].frames
        log.info("injecting class %d x%d (+%d settle frames)",
                 class_id, repeats, settle)
        stream = [f for _ in range(repeats) for f in frames]
        if settle > 0:
            idle_spec = dataclasses.replace(spec, class_ids=(NOTHING_ID,),
                                            seed=spec.seed + 7919)
            idle, _ = generate(idle_spec)
            idle_frames = idle[0].frames
            stream.extend(idle_frames[i % len(idle_frames)]
                          for i in range(settle))
        await self._send_paced(stream)


async def recognizer_service(net, smoother_config=None, host=None, port=None,
                             inject_fps=30.0, inject_seed=None, ready=None):
    """Stream module on the bus: frames in, prediction events out."""
    client = await BusClient.connect(host, port)
    await client.subscribe(topics.TOPIC_FRAMES)
    await client.subscribe(topics.TOPIC_INJECT)
    recognizer = StreamingRecognizer(net, smoother_config)
    cfg = net.config
    if inject_seed is None:
        inject_seed = int(time.time()) % 100000
    template = GenSpec(
        frames=cfg.frames, height=cfg.height, width=cfg.width,
        channels=cfg.channels, seed=inject_seed,
        offset_px=scaled_offset_px(cfg.height, cfg.width),
    )
    injector = ClipInjector(client, template, fps=inject_fps)
    inject_queue = asyncio.Queue()

    async def inject_worker():
        while True:
            request = await inject_queue.get()
            try:
                await injector.handle(request)
            except Exception:
                log.exception("clip injection failed")

    worker = asyncio.create_task(inject_worker())
    log.info("recognizer up (T=%d stride=%d)", cfg.frames,
             recognizer.config.stride)
    if ready is not None:
        ready.set()
    try:
        while True:
            frame = await client.recv()
            if frame is None:
                break
            if frame.topic == topics.TOPIC_INJECT:
                try:
                    inject_queue.put_nowait(json.loads(frame.payload))
                except (json.JSONDecodeError, KeyError) as exc:
                    log.warning("bad inject request: %s", exc)
                continue
            if frame.topic != topics.TOPIC_FRAMES:
                continue
            try:
                image = payload_to_frame(frame.payload)
            except FormatError as exc:
                log.warning("undecodable frame dropped: %s", exc)
                continue
            probs, event = recognizer.push_frame(image)
            if event is not None:
                await client.publish_json(topics.TOPIC_PREDICTION,
                                          event.to_json_dict())
            elif probs is not None:
                # probabilities-only updates let the console draw live bars
                await client.publish_json(
                    "gesture/probabilities",
                    {"window": recognizer.window_index,
                     "probs": [round(float(p), 4) for p in probs],
                     "class_ids": net.class_ids},
                )
    finally:
        worker.cancel()
        await client.close()


async def protocol_service(host=None, port=None, initial_state=None,
                           ready=None):
    """Attention-gated command mapping on the bus."""
    client = await BusClient.connect(host, port)
    await client.subscribe(topics.TOPIC_PREDICTION)
    state = initial_state or ControlState()
    await client.publish_json(topics.TOPIC_ATTENTION, state.to_json_dict())
    log.info("protocol up (attention=%s)", state.attention.value)
    if ready is not None:
        ready.set()
    try:
        while True:
            frame = await client.recv()
            if frame is None:
                break
            try:
                event = json.loads(frame.payload)
                cmd = map_prediction(int(event["class_id"]))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                log.warning("bad prediction payload: %s", exc)
                continue
            except ProtocolError as exc:
                log.warning("%s", exc)
                continue
            if cmd is None:
                continue
            new_state, actions = step(state, cmd)
            log.info("cmd %s: %s -> %s, %d action(s)", cmd.name,
                     (state.attention.value, state.mode.value),
                     (new_state.attention.value, new_state.mode.value),
                     len(actions))
            if new_state != state:
                await client.publish_json(topics.TOPIC_ATTENTION,
                                          new_state.to_json_dict())
            state = new_state
            for action in actions:
                await client.publish_json(topics.TOPIC_COMMAND,
                                          action.to_json_dict())
    finally:
        await client.close()


async def robot_service(sim=None, host=None, port=None, ready=None):
    """Simulated robot on the bus: commands in, 10 Hz state out."""
    sim = sim or RobotSim()
    client = await BusClient.connect(host, port)
    await client.subscribe(topics.TOPIC_COMMAND)
    log.info("robot up (dt=%.3fs)", sim.dt)
    if ready is not None:
        ready.set()

    async def command_loop():
        while True:
            frame = await client.recv()
            if frame is None:
                break
            try:
                action = json.loads(frame.payload)
                sim.apply(action)
            except BusyError as exc:
                log.warning("%s", exc)
                sim.last_event = {"event": "BUSY_REJECTED",
                                  "detail": str(exc)}
                await client.publish(topics.TOPIC_STATE, sim.snapshot_json())
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                log.warning("bad command payload: %s", exc)

    commands = asyncio.create_task(command_loop())
    try:
        tick = 0
        while not commands.done():
            sim.step()
            tick += 1
            if tick % 2 == 0:  # dt=0.05 -> 10 Hz snapshots
                await client.publish(topics.TOPIC_STATE, sim.snapshot_json())
            await asyncio.sleep(sim.dt)
    finally:
        commands.cancel()
        try:
            await commands
        except asyncio.CancelledError:
            pass
        await client.close()
