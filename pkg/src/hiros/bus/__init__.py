"""Topic pub/sub bus: binary TCP framing, broker, client, websocket bridge.

Canonical topics: camera/frames, camera/inject, gesture/prediction,
robot/command, robot/state, system/attention.
"""

from .broker import Broker, DEFAULT_PORT, QUEUE_BOUND
from .client import BusClient, broker_address
from .framing import BusFrame, MsgType, decode_frame, encode_frame, read_frame
from .wsbridge import DEFAULT_WS_PORT, WsBridge

TOPIC_FRAMES = "camera/frames"
TOPIC_INJECT = "camera/inject"
TOPIC_PREDICTION = "gesture/prediction"
TOPIC_COMMAND = "robot/command"
TOPIC_STATE = "robot/state"
TOPIC_ATTENTION = "system/attention"

__all__ = [
    "Broker", "BusClient", "BusFrame", "MsgType", "WsBridge",
    "encode_frame", "decode_frame", "read_frame", "broker_address",
    "DEFAULT_PORT", "DEFAULT_WS_PORT", "QUEUE_BOUND",
    "TOPIC_FRAMES", "TOPIC_INJECT", "TOPIC_PREDICTION", "TOPIC_COMMAND",
    "TOPIC_STATE", "TOPIC_ATTENTION",
]
