"""Deterministic planar simulation of a mobile manipulator.

The robot executes one motion at a time: actions arriving while busy are
rejected with a BUSY error (never queued), matching a command-at-a-time
teleoperation flow.  Kinematics are symbolic: base steps are straight-line
interpolations, the arm is a posture enum plus a planar end-effector
offset, and the grasp/handover task runs as a scripted phase sequence.
Interpolation endpoints are assigned exactly, so repeated runs land on
bit-identical poses.
"""

import dataclasses
import enum
import json
import math

from .errors import BusyError, InputError

BASE_STEP_M = 0.25
BASE_SPEED_MPS = 0.25
ARM_STEP_M = 0.05
ARM_SPEED_MPS = 0.1
GRASP_TOLERANCE_M = 0.05
GRIP_PHASE_S = 0.3  # fixed close/open duration in the handover sequence

_DIR_VECTORS = {
    "forward": (1.0, 0.0),
    "backward": (-1.0, 0.0),
    "left": (0.0, 1.0),
    "right": (0.0, -1.0),
}


class ArmPosture(str, enum.Enum):
    HOME = "HOME"
    EXTENDED = "EXTENDED"
    GRASPING = "GRASPING"
    HANDOVER = "HANDOVER"


def _normalize_angle(theta):
    """Wrap into (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclasses.dataclass
class BasePose:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    def rotate_to_world(self, vx, vy):
        c, s = math.cos(self.heading), math.sin(self.heading)
        return (c * vx - s * vy, s * vx + c * vy)


@dataclasses.dataclass
class _Phase:
    """One linear segment of a scheduled motion.

    Progress is tracked in whole ticks (not accumulated float seconds) so
    a 0.5 s motion under dt=0.05 completes in exactly 10 ticks.
    """

    kind: str  # "base" | "arm" | "wait"
    start: tuple
    target: tuple
    total_ticks: int
    ticks_done: int = 0
    on_done: str | None = None  # event hook name


def _ticks_for(duration_s, dt):
    return max(1, math.ceil(duration_s / dt - 1e-9))


class RobotSim:
    def __init__(self, object_pose=(1.0, 0.0), handover_pose=(0.0, 0.5),
                 dt=0.05):
        if dt <= 0:
            raise InputError("dt must be positive")
        self.dt = dt
        self.base = BasePose()
        self.arm_posture = ArmPosture.HOME
        self.ee_offset = (0.0, 0.0)  # robot frame, meters
        self.gripper_open = True
        self.holding_object = False
        self.object_pose = (float(object_pose[0]), float(object_pose[1]))
        self.object_in_world = True
        self.handover_pose = (float(handover_pose[0]), float(handover_pose[1]))
        self._phases = []
        self._active_kind = None
        self.last_event = None
        self.ticks = 0

    # -- state helpers ----------------------------------------------------

    @property
    def busy(self):
        return bool(self._phases)

    def ee_world(self):
        wx, wy = self.base.rotate_to_world(*self.ee_offset)
        return (self.base.x + wx, self.base.y + wy)

    def _check_conservation(self):
        # the object is either in the world or in the gripper, never both
        assert self.object_in_world != self.holding_object
        if self.holding_object:
            assert not self.gripper_open

    # -- actions -----------------------------------------------------------

    def apply(self, action):
        """Schedule a RobotAction (or its JSON dict); BUSY while moving."""
        kind = action["kind"] if isinstance(action, dict) else action.kind
        direction = (
            action.get("dir") if isinstance(action, dict)
            else getattr(action, "direction", None)
        )
        if self.busy:
            raise BusyError(f"action {kind} rejected: motion in progress")
        if kind == "NONE":
            return
        if kind == "BASE_STEP":
            if direction not in _DIR_VECTORS:
                raise InputError(f"unknown direction {direction!r}")
            vx, vy = _DIR_VECTORS[direction]
            wx, wy = self.base.rotate_to_world(vx * BASE_STEP_M, vy * BASE_STEP_M)
            start = (self.base.x, self.base.y)
            target = (self.base.x + wx, self.base.y + wy)
            self._phases = [_Phase("base", start, target,
                                   _ticks_for(BASE_STEP_M / BASE_SPEED_MPS,
                                              self.dt),
                                   on_done="BASE_STEP_DONE")]
        elif kind == "ARM_ADJUST":
            if direction not in _DIR_VECTORS:
                raise InputError(f"unknown direction {direction!r}")
            vx, vy = _DIR_VECTORS[direction]
            start = self.ee_offset
            target = (start[0] + vx * ARM_STEP_M, start[1] + vy * ARM_STEP_M)
            self.arm_posture = ArmPosture.EXTENDED
            self._phases = [_Phase("arm", start, target,
                                   _ticks_for(ARM_STEP_M / ARM_SPEED_MPS,
                                              self.dt),
                                   on_done="ARM_ADJUST_DONE")]
        elif kind == "ARM_RESET":
            # instantaneous: home posture, zero offset, gripper open
            if self.holding_object:
                # whatever the gripper held drops back into the world
                self.object_pose = self.ee_world()
                self.object_in_world = True
                self.holding_object = False
            self.arm_posture = ArmPosture.HOME
            self.ee_offset = (0.0, 0.0)
            self.gripper_open = True
            self.last_event = {"event": "ARM_RESET_DONE"}
        elif kind == "EXECUTE_GRASP_HANDOVER":
            self._schedule_grasp_handover()
        else:
            raise InputError(f"unknown action kind {kind!r}")

    def _schedule_grasp_handover(self):
        ee = self.ee_world()
        if not self.object_in_world:
            self.last_event = {"event": "TASK_FAILED",
                               "reason": "no object in world"}
            return
        dist = math.hypot(ee[0] - self.object_pose[0],
                          ee[1] - self.object_pose[1])
        if dist > GRASP_TOLERANCE_M:
            self.last_event = {
                "event": "TASK_FAILED",
                "reason": f"object {dist:.3f} m from end effector "
                          f"(tolerance {GRASP_TOLERANCE_M})",
            }
            return
        # target offset that puts the end effector on the handover pose
        rel = (self.handover_pose[0] - self.base.x,
               self.handover_pose[1] - self.base.y)
        c, s = math.cos(-self.base.heading), math.sin(-self.base.heading)
        handover_offset = (c * rel[0] - s * rel[1], s * rel[0] + c * rel[1])
        carry_dist = math.hypot(handover_offset[0] - self.ee_offset[0],
                                handover_offset[1] - self.ee_offset[1])
        self._phases = [
            _Phase("wait", (), (), _ticks_for(GRIP_PHASE_S, self.dt),
                   on_done="GRASPED"),
            _Phase("arm", self.ee_offset, handover_offset,
                   _ticks_for(carry_dist / ARM_SPEED_MPS, self.dt)),
            _Phase("wait", (), (), _ticks_for(GRIP_PHASE_S, self.dt),
                   on_done="HANDED_OVER"),
        ]

    # -- simulation loop ----------------------------------------------------

    def step(self):
        """Advance one tick of ``dt`` seconds; returns emitted events."""
        self.ticks += 1
        events = []
        if self._phases:
            phase = self._phases[0]
            phase.ticks_done += 1
            frac = min(phase.ticks_done / phase.total_ticks, 1.0)
            if phase.kind == "base":
                if frac >= 1.0:
                    self.base.x, self.base.y = phase.target
                else:
                    self.base.x = phase.start[0] + frac * (phase.target[0]
                                                           - phase.start[0])
                    self.base.y = phase.start[1] + frac * (phase.target[1]
                                                           - phase.start[1])
            elif phase.kind == "arm":
                if frac >= 1.0:
                    self.ee_offset = phase.target
                else:
                    self.ee_offset = (
                        phase.start[0] + frac * (phase.target[0] - phase.start[0]),
                        phase.start[1] + frac * (phase.target[1] - phase.start[1]),
                    )
            if frac >= 1.0:
                self._phases.pop(0)
                if phase.on_done == "GRASPED":
                    self.gripper_open = False
                    self.holding_object = True
                    self.object_in_world = False
                    self.arm_posture = ArmPosture.GRASPING
                    events.append({"event": "GRASPED"})
                elif phase.on_done == "HANDED_OVER":
                    self.holding_object = False
                    self.gripper_open = True
                    self.object_pose = self.ee_world()
                    self.object_in_world = True
                    self.arm_posture = ArmPosture.HANDOVER
                    events.append({"event": "TASK_DONE", "task": "HANDOVER"})
                elif phase.on_done is not None:
                    events.append({"event": phase.on_done})
                if not self._phases and not events:
                    events.append({"event": "TASK_DONE"})
        if events:
            self.last_event = events[-1]
        self._check_conservation()
        return events

    def snapshot(self):
        """JSON-serializable full state."""
        return {
            "base": {"x": self.base.x, "y": self.base.y,
                     "heading": _normalize_angle(self.base.heading)},
            "arm": {
                "posture": self.arm_posture.value,
                "ee_offset": list(self.ee_offset),
                "gripper_open": self.gripper_open,
                "holding_object": self.holding_object,
            },
            "world": {
                "object_pose": list(self.object_pose)
                if self.object_in_world else None,
                "object_held": self.holding_object,
                "handover_pose": list(self.handover_pose),
            },
            "busy": self.busy,
            "last_event": self.last_event,
            "ticks": self.ticks,
        }

    def snapshot_json(self):
        return json.dumps(self.snapshot())
