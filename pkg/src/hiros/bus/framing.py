"""Binary frame codec for the TCP bus.

Layout: magic "HIRO", version u8, msgType u8, topicLen u16 BE, topic
UTF-8 bytes, payloadLen u32 BE, payload bytes.  Decode errors carry the
byte offset of the violation; the broker closes connections that produce
them.
"""

import dataclasses
import enum
import struct

from ..errors import FormatError

MAGIC = b"HIRO"
VERSION = 1

# hostile length-field protection; real topics/payloads are far smaller
MAX_TOPIC_LEN = 1024
MAX_PAYLOAD_LEN = 16 * 1024 * 1024


class MsgType(enum.IntEnum):
    PUB = 0
    SUB = 1
    UNSUB = 2
    PING = 3
    PONG = 4


@dataclasses.dataclass(frozen=True)
class BusFrame:
    msg_type: MsgType
    topic: str = ""
    payload: bytes = b""


def encode_frame(frame):
    topic = frame.topic.encode("utf-8")
    if frame.msg_type in (MsgType.PUB, MsgType.SUB, MsgType.UNSUB) and not topic:
        raise FormatError(f"{frame.msg_type.name} frame requires a topic")
    if len(topic) > MAX_TOPIC_LEN:
        raise FormatError(f"topic too long ({len(topic)} bytes)")
    if len(frame.payload) > MAX_PAYLOAD_LEN:
        raise FormatError(f"payload too long ({len(frame.payload)} bytes)")
    return (
        MAGIC
        + bytes([VERSION, int(frame.msg_type)])
        + struct.pack(">H", len(topic))
        + topic
        + struct.pack(">I", len(frame.payload))
        + frame.payload
    )


def _check_header(magic, version, msg_type):
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    try:
        mt = MsgType(msg_type)
    except ValueError:
        raise FormatError(f"unknown message type {msg_type}", offset=5) from None
    return mt


def decode_frame(data):
    """Decode exactly one frame; trailing bytes are an error."""
    if len(data) < 8:
        raise FormatError("frame shorter than fixed header", offset=len(data))
    mt = _check_header(data[:4], data[4], data[5])
    (topic_len,) = struct.unpack_from(">H", data, 6)
    if topic_len > MAX_TOPIC_LEN:
        raise FormatError(f"topic length {topic_len} over limit", offset=6)
    off = 8
    if len(data) < off + topic_len + 4:
        raise FormatError("truncated inside topic/payload length",
                          offset=len(data))
    try:
        topic = data[off:off + topic_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"topic is not UTF-8: {exc}", offset=off) from None
    off += topic_len
    (payload_len,) = struct.unpack_from(">I", data, off)
    if payload_len > MAX_PAYLOAD_LEN:
        raise FormatError(f"payload length {payload_len} over limit", offset=off)
    off += 4
    if len(data) != off + payload_len:
        raise FormatError(
            f"expected {payload_len} payload bytes, found {len(data) - off}",
            offset=len(data) if len(data) < off + payload_len else off + payload_len,
        )
    payload = data[off:off + payload_len]
    if mt in (MsgType.PUB, MsgType.SUB, MsgType.UNSUB) and not topic:
        raise FormatError(f"{mt.name} frame requires a topic", offset=6)
    return BusFrame(mt, topic, payload)


async def read_frame(reader):
    """Read one frame from an asyncio stream; None on clean EOF."""
    import asyncio

    try:
        head = await reader.readexactly(8)
    except asyncio.IncompleteReadError as exc:
        if not exc.partial:
            return None  # clean close between frames
        raise FormatError("connection closed mid-header",
                          offset=len(exc.partial)) from None
    mt = _check_header(head[:4], head[4], head[5])
    (topic_len,) = struct.unpack_from(">H", head, 6)
    if topic_len > MAX_TOPIC_LEN:
        raise FormatError(f"topic length {topic_len} over limit", offset=6)
    try:
        topic_raw = await reader.readexactly(topic_len)
        (payload_len,) = struct.unpack(">I", await reader.readexactly(4))
        if payload_len > MAX_PAYLOAD_LEN:
            raise FormatError(f"payload length {payload_len} over limit",
                              offset=8 + topic_len)
        payload = await reader.readexactly(payload_len)
    except asyncio.IncompleteReadError as exc:
        raise FormatError("connection closed mid-frame",
                          offset=8 + len(exc.partial)) from None
    try:
        topic = topic_raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"topic is not UTF-8: {exc}", offset=8) from None
    if mt in (MsgType.PUB, MsgType.SUB, MsgType.UNSUB) and not topic:
        raise FormatError(f"{mt.name} frame requires a topic", offset=6)
    return BusFrame(mt, topic, payload)
