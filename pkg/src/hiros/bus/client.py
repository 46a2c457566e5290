"""Asyncio client for the TCP bus."""

import asyncio
import json
import logging
import os

from .framing import BusFrame, MsgType, encode_frame, read_frame

log = logging.getLogger(__name__)


def broker_address():
    """Default broker address, env-overridable."""
    host = os.environ.get("HIROS_BUS_HOST", "127.0.0.1")
    port = int(os.environ.get("HIROS_BUS_PORT", "7447"))
    return host, port


class BusClient:
    def __init__(self, reader, writer):
        self._reader = reader
        self._writer = writer

    @classmethod
    async def connect(cls, host=None, port=None):
        default_host, default_port = broker_address()
        reader, writer = await asyncio.open_connection(
            host or default_host, port if port is not None else default_port
        )
        return cls(reader, writer)

    async def subscribe(self, topic):
        await self._send(BusFrame(MsgType.SUB, topic))

    async def unsubscribe(self, topic):
        await self._send(BusFrame(MsgType.UNSUB, topic))

    async def publish(self, topic, payload):
        if isinstance(payload, str):
            payload = payload.encode("utf-8")
        await self._send(BusFrame(MsgType.PUB, topic, payload))

    async def publish_json(self, topic, obj):
        await self.publish(topic, json.dumps(obj).encode("utf-8"))

    async def ping(self, payload=b""):
        await self._send(BusFrame(MsgType.PING, "", payload))

    async def recv(self):
        """Next inbound frame (PUB or PONG); None on connection close."""
        return await read_frame(self._reader)

    async def _send(self, frame):
        self._writer.write(encode_frame(frame))
        await self._writer.drain()

    async def close(self):
        try:
            self._writer.close()
            await self._writer.wait_closed()
        except (ConnectionError, OSError):
            pass
