"""Sliding-window streaming inference with vote smoothing and debounce.

A frame ring buffers the last T frames; every S-th frame once the ring is
full, the buffered clip runs through the network and yields one window of
class probabilities.  The smoother turns windows into command candidates:
a class must win the argmax vote in a strict majority of the last K
windows, carry enough mean probability, not be a background class, and
fall outside the refractory span of the previous emission.
"""

import collections
import dataclasses
import logging
import time

import numpy as np

from .dataset import BACKGROUND_IDS, class_table
from .errors import DimensionError
from .tensor import no_grad

log = logging.getLogger(__name__)


@dataclasses.dataclass
class SmootherConfig:
    vote_window: int = 5        # K: windows in the majority vote
    emit_threshold: float = 0.85  # theta: mean prob over the voted windows
    refractory: int = 8         # R: windows to stay silent after an emission
    stride: int = 4             # S: frames between inferences

    def validate(self):
        if self.vote_window < 1:
            raise ValueError("vote_window must be >= 1")
        if self.refractory < 0:
            raise ValueError("refractory must be >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclasses.dataclass
class PredictionEvent:
    class_id: int
    label: str
    mean_prob: float
    window_index: int
    timestamp_ms: int

    def to_json_dict(self):
        return {
            "class_id": self.class_id,
            "label": self.label,
            "prob": self.mean_prob,
            "window": self.window_index,
            "ts_ms": self.timestamp_ms,
        }


class FrameRing:
    """Fixed-capacity frame buffer; inference is only valid when full."""

    def __init__(self, capacity):
        self.capacity = capacity
        self._frames = collections.deque(maxlen=capacity)
        self.frame_counter = 0

    @property
    def full(self):
        return len(self._frames) == self.capacity

    def push(self, frame):
        self._frames.append(frame)
        self.frame_counter += 1

    def as_clip(self):
        """(T, H, W, C) uint8 stack, oldest frame first."""
        return np.stack(list(self._frames))


class Smoother:
    """Window probabilities in, debounced prediction events out.

    ``class_ids`` aligns probability columns with raw gesture-class ids
    when the model was trained on a vocabulary subset.
    """

    def __init__(self, config=None, labels=None, class_ids=None):
        self.config = config or SmootherConfig()
        self.config.validate()
        self.labels = labels or {c.id: c.label for c in class_table()}
        self.class_ids = list(class_ids) if class_ids is not None else None
        self._history = collections.deque(maxlen=self.config.vote_window)
        self._last_emit_window = None

    def feed(self, window_index, probs, timestamp_ms=None):
        """Consider one inference window; returns an event or None."""
        probs = np.asarray(probs).ravel()
        col = int(probs.argmax())
        top = self.class_ids[col] if self.class_ids is not None else col
        self._history.append((window_index, top, float(probs[col])))
        k = self.config.vote_window
        if len(self._history) < k:
            return None
        votes = [h for h in self._history if h[1] == top]
        if len(votes) * 2 <= k:  # need a strict majority of the last K
            return None
        mean_prob = float(np.mean([v[2] for v in votes]))
        if mean_prob < self.config.emit_threshold:
            return None
        if top in BACKGROUND_IDS:
            return None
        if (
            self._last_emit_window is not None
            and window_index - self._last_emit_window <= self.config.refractory
        ):
            return None
        self._last_emit_window = window_index
        if timestamp_ms is None:
            timestamp_ms = int(time.time() * 1000)
        return PredictionEvent(
            class_id=top,
            label=self.labels.get(top, str(top)),
            mean_prob=mean_prob,
            window_index=window_index,
            timestamp_ms=timestamp_ms,
        )


class StreamingRecognizer:
    """Glues the ring, the model and the smoother together."""

    def __init__(self, net, smoother_config=None, labels=None):
        self.net = net
        self.config = smoother_config or SmootherConfig()
        self.ring = FrameRing(net.config.frames)
        self.smoother = Smoother(self.config, labels=labels,
                                 class_ids=net.class_ids)
        self.window_index = 0
        self._frames_since_full = -1

    def push_frame(self, frame, timestamp_ms=None):
        """Buffer one (H, W, C) uint8 frame.

        Returns (window_probs, event): window_probs is None unless this
        frame completed an inference stride; event is None unless the
        smoother emitted.
        """
        cfg = self.net.config
        frame = np.asarray(frame)
        if frame.shape != (cfg.height, cfg.width, cfg.channels):
            raise DimensionError(
                f"frame must be ({cfg.height}, {cfg.width}, {cfg.channels}),"
                f" got {frame.shape}"
            )
        self.ring.push(frame)
        if not self.ring.full:
            return None, None
        self._frames_since_full += 1
        if self._frames_since_full % self.config.stride != 0:
            return None, None
        clip = self.ring.as_clip().astype(np.float64) / 255.0
        x = np.moveaxis(clip, -1, 0)[np.newaxis]  # (1, C, T, H, W)
        with no_grad():
            probs = self.net.forward(x).data[0]
        self.window_index += 1
        event = self.smoother.feed(self.window_index, probs, timestamp_ms)
        if event is not None:
            log.info("emit %s (p=%.3f, window %d)",
                     event.label, event.mean_prob, event.window_index)
        return probs, event
