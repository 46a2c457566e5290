"""Command mapping and the attention-gated control state machine.

Attention gating: only Resume and Stop act while PAUSED, SHUTDOWN absorbs
everything, and robot actions are emitted only from ACTIVE.  Directional
commands are overloaded by mode: base stepping under BASE_NAV, end
effector nudges under ARM_TARGETING, ignored when IDLE.  Pause preserves
the control mode, and Start is idempotent.

Commands with no demo semantics (Handwave, Agree, ...) are accepted and
logged but produce no action, so the full 25-command vocabulary stays
wired.
"""

import dataclasses
import enum
import logging

from .dataset import BACKGROUND_IDS, COMMAND_LABELS
from .errors import ProtocolError

log = logging.getLogger(__name__)


class Command(enum.IntEnum):
    START = 0
    STOP = 1
    HANDWAVE = 2
    RESUME = 3
    PAUSE = 4
    AGREE = 5
    DISAGREE = 6
    REPEAT = 7
    UNDO = 8
    POINT_TO_OBJECT = 9
    POINT_TO_AREA = 10
    I_WILL_FOLLOW_YOU = 11
    FOLLOW_ME = 12
    WATCH_ME = 13
    WATCH_OUT = 14
    SPEED_UP = 15
    SLOW_DOWN = 16
    THUMBS_UP = 17
    THUMBS_DOWN = 18
    GIVE_ME_AN_ITEM = 19
    RECEIVE_AN_ITEM = 20
    MOVE_BACKWARDS = 21
    COME_FORWARD = 22
    MOVE_TO_THE_LEFT = 23
    MOVE_TO_THE_RIGHT = 24

    @property
    def label(self):
        return COMMAND_LABELS[int(self)]


# removed from the final recognizer vocabulary after recall pruning; still
# mappable, but recognizer configs can exclude them
DEPRECATED_COMMANDS = frozenset({
    Command.RECEIVE_AN_ITEM,
    Command.GIVE_ME_AN_ITEM,
    Command.SPEED_UP,
    Command.SLOW_DOWN,
    Command.I_WILL_FOLLOW_YOU,
})


class Attention(str, enum.Enum):
    ACTIVE = "ACTIVE"
    PAUSED = "PAUSED"
    SHUTDOWN = "SHUTDOWN"


class Mode(str, enum.Enum):
    IDLE = "IDLE"
    BASE_NAV = "BASE_NAV"
    ARM_TARGETING = "ARM_TARGETING"


_DIRECTIONS = {
    Command.COME_FORWARD: "forward",
    Command.MOVE_BACKWARDS: "backward",
    Command.MOVE_TO_THE_LEFT: "left",
    Command.MOVE_TO_THE_RIGHT: "right",
}

ARM_ADJUST_STEP_M = 0.05


@dataclasses.dataclass(frozen=True)
class ControlState:
    attention: Attention = Attention.ACTIVE
    mode: Mode = Mode.IDLE
    pending_target: tuple | None = None  # planar offset while arm targeting

    def to_json_dict(self):
        return {
            "attention": self.attention.value,
            "mode": self.mode.value,
            "pending_target": list(self.pending_target)
            if self.pending_target is not None else None,
        }


@dataclasses.dataclass(frozen=True)
class RobotAction:
    kind: str  # BASE_STEP | ARM_ADJUST | EXECUTE_GRASP_HANDOVER | ARM_RESET
    direction: str | None = None

    def to_json_dict(self):
        d = {"kind": self.kind}
        if self.direction is not None:
            d["dir"] = self.direction
        return d


def map_prediction(event):
    """PredictionEvent (or class id) -> Command, or None for background."""
    class_id = event if isinstance(event, int) else event.class_id
    if class_id in BACKGROUND_IDS:
        return None
    try:
        return Command(class_id)
    except ValueError:
        raise ProtocolError(f"unknown class id {class_id}") from None


def step(state, cmd):
    """Pure transition: (state, command) -> (state', actions)."""
    cmd = Command(cmd)
    if state.attention is Attention.SHUTDOWN:
        return state, []

    if state.attention is Attention.PAUSED:
        if cmd is Command.RESUME:
            return dataclasses.replace(state, attention=Attention.ACTIVE), []
        if cmd is Command.STOP:
            return dataclasses.replace(state, attention=Attention.SHUTDOWN), []
        return state, []

    # ACTIVE
    if cmd is Command.PAUSE:
        return dataclasses.replace(state, attention=Attention.PAUSED), []
    if cmd is Command.STOP:
        return dataclasses.replace(state, attention=Attention.SHUTDOWN), []
    if cmd is Command.START:
        return dataclasses.replace(state, mode=Mode.BASE_NAV), []
    if cmd is Command.POINT_TO_OBJECT:
        return dataclasses.replace(
            state, mode=Mode.ARM_TARGETING, pending_target=(0.0, 0.0)
        ), []
    if cmd in _DIRECTIONS:
        direction = _DIRECTIONS[cmd]
        if state.mode is Mode.BASE_NAV:
            return state, [RobotAction("BASE_STEP", direction)]
        if state.mode is Mode.ARM_TARGETING:
            dx, dy = state.pending_target or (0.0, 0.0)
            shift = {
                "forward": (ARM_ADJUST_STEP_M, 0.0),
                "backward": (-ARM_ADJUST_STEP_M, 0.0),
                "left": (0.0, ARM_ADJUST_STEP_M),
                "right": (0.0, -ARM_ADJUST_STEP_M),
            }[direction]
            new_target = (dx + shift[0], dy + shift[1])
            return (
                dataclasses.replace(state, pending_target=new_target),
                [RobotAction("ARM_ADJUST", direction)],
            )
        return state, []
    if cmd is Command.RESUME:
        if state.mode is Mode.ARM_TARGETING:
            return (
                dataclasses.replace(state, mode=Mode.IDLE, pending_target=None),
                [RobotAction("EXECUTE_GRASP_HANDOVER")],
            )
        return state, []
    if cmd is Command.UNDO:
        return (
            dataclasses.replace(state, mode=Mode.IDLE, pending_target=None),
            [RobotAction("ARM_RESET")],
        )
    log.debug("command %s has no demo semantics; no action", cmd.name)
    return state, []
