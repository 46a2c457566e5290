"""Gesture vocabulary, synthetic clip generation and dataset persistence.

The 27 classes are 25 interaction commands plus the two background classes
("Doing nothing" / "Doing something else").  Clips are rendered from
parametric motion prototypes: a static torso and head plus one or two hand
discs following periodic trajectories.  Two generation modes model the two
data-collection conditions:

* standardized mode (stage 2): every participant renders the same canonical
  prototype for a class, so inter-participant variation is only jitter;
* idiosyncratic mode (stage 1): each participant samples their own
  class-to-prototype mapping (without replacement) from a pool of 40
  primitives, so the same label maps to different motions across people.

All randomness is derived from ``numpy`` SeedSequences keyed by
(seed, stage, participant, class, clip index) tuples, which makes every
clip a pure function of the generation spec.
"""

import dataclasses
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, InputError

COMMAND_LABELS = [
    "Start",
    "Stop",
    "Handwave",
    "Resume",
    "Pause",
    "Agree",
    "Disagree",
    "Repeat",
    "Undo",
    "Point to an Object",
    "Point to an Area",
    "I will Follow You",
    "Follow Me",
    "Watch Me",
    "Watch Out",
    "Speed up",
    "Slow down",
    "Thumbs up",
    "Thumbs down",
    "Give me an item",
    "Receive an item",
    "Move backwards",
    "Come forward",
    "Move to the left",
    "Move to the right",
]

BACKGROUND_LABELS = ["Doing nothing", "Doing something else"]

NOTHING_ID = 25
SOMETHING_ELSE_ID = 26
BACKGROUND_IDS = frozenset({NOTHING_ID, SOMETHING_ELSE_ID})
NUM_CLASSES = 27

PROTOTYPE_POOL_SIZE = 40


@dataclasses.dataclass(frozen=True)
class GestureClass:
    id: int
    label: str
    kind: str  # "command" | "background"


def class_table():
    """The fixed 27-entry class table (ids 0-24 commands, 25/26 background)."""
    entries = [
        GestureClass(i, label, "command") for i, label in enumerate(COMMAND_LABELS)
    ]
    entries.append(GestureClass(NOTHING_ID, BACKGROUND_LABELS[0], "background"))
    entries.append(GestureClass(SOMETHING_ELSE_ID, BACKGROUND_LABELS[1], "background"))
    return entries


_LABEL_TO_ID = {c.label: c.id for c in class_table()}


def class_id_for_label(label):
    try:
        return _LABEL_TO_ID[label]
    except KeyError:
        raise InputError(f"unknown gesture label {label!r}") from None


# ---------------------------------------------------------------------------
# Motion prototypes


@dataclasses.dataclass(frozen=True)
class HandTrack:
    """Periodic planar trajectory for one hand, in normalized frame units."""

    base_u: float
    base_v: float
    amp_u: float
    amp_v: float
    freq: float
    phase_u: float
    phase_v: float

    def position(self, t, amp_scale=1.0, phase_shift=0.0):
        du = self.amp_u * amp_scale * math.sin(
            2.0 * math.pi * self.freq * t + self.phase_u + phase_shift
        )
        dv = self.amp_v * amp_scale * math.sin(
            2.0 * math.pi * self.freq * t + self.phase_v + phase_shift
        )
        return self.base_u + du, self.base_v + dv


@dataclasses.dataclass(frozen=True)
class MotionPrototype:
    name: str
    left: HandTrack | None
    right: HandTrack | None


_LEFT_U, _RIGHT_U = 0.32, 0.68
_HAND_V = 0.52
_AMP = 0.11
_HIGH = 0.18  # raised-hands level offset


def _family_track(family, base_u, base_v, freq):
    """One of five trajectory families; all are periodic with integer freq."""
    if family == "hwave":
        return HandTrack(base_u, base_v, _AMP, 0.0, freq, 0.0, 0.0)
    if family == "vwave":
        return HandTrack(base_u, base_v, 0.0, _AMP, freq, 0.0, 0.0)
    if family == "circle":
        # quarter-period phase split turns the two sines into a circle
        return HandTrack(base_u, base_v, _AMP, _AMP, freq, math.pi / 2.0, 0.0)
    if family == "push":
        # one-sided vertical raise: offset sine, never below the base level
        return HandTrack(base_u, base_v - _AMP / 2.0, 0.0, _AMP / 2.0, freq,
                         0.0, -math.pi / 2.0)
    if family == "diag":
        return HandTrack(base_u, base_v, _AMP, _AMP, freq, 0.0, 0.0)
    raise ValueError(family)


def prototype_pool():
    """The 40 distinct motion primitives idiosyncratic mappings draw from."""
    pool = []
    for family in ("hwave", "vwave", "circle", "push", "diag"):
        for hands in ("right", "both"):
            for freq in (1.0, 2.0):
                for level in (0.0, -_HIGH):
                    v = _HAND_V + level
                    right = _family_track(family, _RIGHT_U, v, freq)
                    if hands == "both":
                        left = _family_track(family, _LEFT_U, v, freq)
                        # mirror the horizontal component for the left hand
                        left = dataclasses.replace(left, amp_u=-left.amp_u)
                    else:
                        left = HandTrack(_LEFT_U, _HAND_V, 0.0, 0.0, 1.0, 0.0, 0.0)
                    pool.append(
                        MotionPrototype(
                            f"{family}-{hands}-f{int(freq)}-"
                            f"{'high' if level else 'mid'}",
                            left,
                            right,
                        )
                    )
    assert len(pool) == PROTOTYPE_POOL_SIZE
    return pool


_IDLE = MotionPrototype(
    "idle",
    HandTrack(_LEFT_U, _HAND_V, 0.0, 0.0, 1.0, 0.0, 0.0),
    HandTrack(_RIGHT_U, _HAND_V, 0.0, 0.0, 1.0, 0.0, 0.0),
)

_SCRIBBLE = MotionPrototype(
    "scribble",
    None,
    HandTrack(_RIGHT_U, _HAND_V - 0.06, _AMP, _AMP * 0.8, 3.0, 1.1, 0.4),
)


def canonical_prototype(class_id, pool):
    """Standardized-mode mapping: one fixed prototype per class."""
    if class_id == NOTHING_ID:
        return _IDLE
    if class_id == SOMETHING_ELSE_ID:
        return _SCRIBBLE
    return pool[class_id]


# ---------------------------------------------------------------------------
# Generation spec and rendering


def scaled_offset_px(height, width):
    """Spatial jitter that keeps trajectories in-frame at any resolution
    (the +-3 px default is calibrated for 32x32 frames)."""
    return 3 * min(height, width) // 32


@dataclasses.dataclass
class GenSpec:
    stage: int = 2
    participants: int = 10
    clips_per_class: int = 5  # per participant
    frames: int = 16
    height: int = 32
    width: int = 32
    channels: int = 1
    class_ids: tuple = tuple(range(NUM_CLASSES))
    amp_jitter: float = 0.15
    phase_jitter: float = 0.1
    offset_px: int = 3
    pixel_noise: float = 8.0
    seed: int = 0

    def validate(self):
        if self.stage not in (1, 2):
            raise ConfigError(f"stage must be 1 or 2, got {self.stage}")
        if self.participants < 1:
            raise ConfigError("participants must be >= 1")
        if self.channels != 1:
            raise ConfigError("only grayscale rendering is supported")
        ids = tuple(self.class_ids)
        if not ids or any(not 0 <= c < NUM_CLASSES for c in ids):
            raise ConfigError(f"class_ids out of range: {ids}")
        if len(set(ids)) != len(ids):
            raise ConfigError("class_ids contains duplicates")
        if self.stage == 1 and len(ids) > PROTOTYPE_POOL_SIZE:
            raise ConfigError(
                f"idiosyncratic mode needs pool >= classes: "
                f"{PROTOTYPE_POOL_SIZE} < {len(ids)}"
            )

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["class_ids"] = list(self.class_ids)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["class_ids"] = tuple(d.get("class_ids", range(NUM_CLASSES)))
        return cls(**d)


@dataclasses.dataclass
class Clip:
    frames: np.ndarray  # (T, H, W, C) uint8
    class_id: int
    participant_id: int
    stage: int
    variant_seed: int

    def __eq__(self, other):
        return (
            isinstance(other, Clip)
            and np.array_equal(self.frames, other.frames)
            and (self.class_id, self.participant_id, self.stage, self.variant_seed)
            == (other.class_id, other.participant_id, other.stage,
                other.variant_seed)
        )


def _disc_mask(hh, ww, cu, cv, radius):
    return (ww - cu) ** 2 + (hh - cv) ** 2 <= radius**2


def _render_clip(prototype, spec, rng):
    """Rasterize one clip; returns (T, H, W, 1) uint8.

    Raises if any jittered hand trajectory would leave the frame, which
    would silently destroy class information.
    """
    T, H, W = spec.frames, spec.height, spec.width
    amp_scale = 1.0 + rng.uniform(-spec.amp_jitter, spec.amp_jitter)
    phase_shift = rng.uniform(-spec.phase_jitter, spec.phase_jitter)
    du = rng.integers(-spec.offset_px, spec.offset_px + 1)
    dv = rng.integers(-spec.offset_px, spec.offset_px + 1)

    hh, ww = np.mgrid[0:H, 0:W]
    hand_r = 0.07 * min(H, W)
    head_r = 0.08 * min(H, W)

    frames = np.empty((T, H, W, 1), dtype=np.uint8)
    torso_u0, torso_u1 = int((0.36 * W)) + du, int((0.64 * W)) + du
    torso_v0, torso_v1 = int((0.40 * H)) + dv, int((0.88 * H)) + dv
    head_cu, head_cv = 0.5 * W + du, 0.28 * H + dv

    for ti in range(T):
        t = ti / T  # integer-frequency tracks loop seamlessly at t in [0,1)
        img = np.full((H, W), 30.0)
        img[max(torso_v0, 0):torso_v1, max(torso_u0, 0):torso_u1] = 110.0
        img[_disc_mask(hh, ww, head_cu, head_cv, head_r)] = 110.0
        for track in (prototype.left, prototype.right):
            if track is None:
                continue
            u, v = track.position(t, amp_scale, phase_shift)
            cu, cv = u * W + du, v * H + dv
            if not (hand_r <= cu <= W - hand_r and hand_r <= cv <= H - hand_r):
                raise ConfigError(
                    f"hand trajectory leaves the frame at ({cu:.1f}, {cv:.1f})"
                )
            img[_disc_mask(hh, ww, cu, cv, hand_r)] = 235.0
        if spec.pixel_noise > 0:
            img += rng.normal(0.0, spec.pixel_noise, size=(H, W))
        frames[ti, :, :, 0] = np.clip(img, 0, 255).astype(np.uint8)
    return frames


def prototype_mapping(spec, participant_id, pool=None):
    """The class->prototype mapping a participant performs under.

    Standardized mode ignores the participant (canonical prototypes);
    idiosyncratic mode samples without replacement from the pool, seeded
    per participant.
    """
    pool = pool if pool is not None else prototype_pool()
    if spec.stage == 2:
        return {c: canonical_prototype(c, pool) for c in spec.class_ids}
    rng = np.random.default_rng(
        np.random.SeedSequence([spec.seed & 0x7FFFFFFF, 1, participant_id])
    )
    picks = rng.choice(PROTOTYPE_POOL_SIZE, size=len(spec.class_ids), replace=False)
    return {c: pool[picks[i]] for i, c in enumerate(spec.class_ids)}


def generate(spec):
    """Render every clip the spec describes; returns (clips, Manifest)."""
    spec.validate()
    pool = prototype_pool()
    clips = []
    for pid in range(spec.participants):
        mapping = prototype_mapping(spec, pid, pool)
        for class_id in spec.class_ids:
            for idx in range(spec.clips_per_class):
                ss = np.random.SeedSequence(
                    [spec.seed & 0x7FFFFFFF, spec.stage, pid, class_id, idx]
                )
                variant_seed = int(ss.generate_state(1, np.uint64)[0])
                rng = np.random.default_rng(np.random.PCG64(variant_seed))
                frames = _render_clip(mapping[class_id], spec, rng)
                clips.append(Clip(frames, class_id, pid, spec.stage, variant_seed))
    manifest = Manifest(
        entries=[
            ManifestEntry(path=None, class_id=c.class_id,
                          participant_id=c.participant_id, stage=c.stage, fold=-1)
            for c in clips
        ],
        spec=spec.to_dict(),
    )
    return clips, manifest


# ---------------------------------------------------------------------------
# GCLP binary clip format

_GCLP_MAGIC = b"GCLP"
_GCLP_VERSION = 1
_GCLP_HEADER = struct.Struct(">4sBHHHHHIBQ")  # 28 bytes before pixels


def encode_clip(clip):
    t, h, w, c = clip.frames.shape
    header = _GCLP_HEADER.pack(
        _GCLP_MAGIC, _GCLP_VERSION, t, h, w, c,
        clip.class_id, clip.participant_id, clip.stage, clip.variant_seed,
    )
    return header + clip.frames.tobytes()


def decode_clip(data):
    if len(data) < _GCLP_HEADER.size:
        raise FormatError("clip shorter than header", offset=len(data))
    magic, version, t, h, w, c, class_id, pid, stage, variant = \
        _GCLP_HEADER.unpack_from(data)
    if magic != _GCLP_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != _GCLP_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    npix = t * h * w * c
    if len(data) != _GCLP_HEADER.size + npix:
        raise FormatError(
            f"expected {npix} pixel bytes, found {len(data) - _GCLP_HEADER.size}",
            offset=len(data),
        )
    frames = np.frombuffer(
        data, dtype=np.uint8, count=npix, offset=_GCLP_HEADER.size
    ).reshape(t, h, w, c).copy()
    return Clip(frames, class_id, pid, stage, variant)


# ---------------------------------------------------------------------------
# Manifest + folds


@dataclasses.dataclass
class ManifestEntry:
    path: str | None
    class_id: int
    participant_id: int
    stage: int
    fold: int = -1


@dataclasses.dataclass
class Manifest:
    entries: list
    spec: dict

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps({"spec": self.spec}) + "\n")
            for e in self.entries:
                f.write(json.dumps(dataclasses.asdict(e)) + "\n")

    @classmethod
    def load(cls, path):
        spec = {}
        entries = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if "spec" in rec:
                    spec = rec["spec"]
                else:
                    entries.append(ManifestEntry(**rec))
        return cls(entries=entries, spec=spec)

    def participants(self):
        return sorted({e.participant_id for e in self.entries})


def kfold(manifest, k=5, seed=0):
    """Assign participant-disjoint folds, as evenly sized as possible."""
    participants = manifest.participants()
    if len(participants) < k:
        raise InputError(
            f"need at least {k} participants for {k} folds, have {len(participants)}"
        )
    order = np.array(participants)
    np.random.default_rng(seed).shuffle(order)
    fold_of = {}
    for fold, chunk in enumerate(np.array_split(order, k)):
        for pid in chunk:
            fold_of[int(pid)] = fold
    entries = [
        dataclasses.replace(e, fold=fold_of[e.participant_id])
        for e in manifest.entries
    ]
    return Manifest(entries=entries, spec=dict(manifest.spec))


# ---------------------------------------------------------------------------
# Disk layout helpers used by the CLI


def save_clipset(clips, manifest, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (clip, entry) in enumerate(zip(clips, manifest.entries)):
        name = (
            f"clip_s{clip.stage}_p{clip.participant_id:03d}"
            f"_c{clip.class_id:02d}_{i:06d}.gclp"
        )
        (out / name).write_bytes(encode_clip(clip))
        entries.append(dataclasses.replace(entry, path=name))
    m = Manifest(entries=entries, spec=dict(manifest.spec))
    m.save(out / "manifest.jsonl")
    return m


def load_clipset(manifest_path):
    manifest = Manifest.load(manifest_path)
    base = Path(manifest_path).parent
    clips = [decode_clip((base / e.path).read_bytes()) for e in manifest.entries]
    return clips, manifest
