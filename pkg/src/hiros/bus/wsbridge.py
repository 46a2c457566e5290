"""Websocket JSON bridge onto the TCP bus, plus console static hosting.

Envelopes:

* server -> client: ``{"topic": t, "payload": <object>}`` when the bus
  payload is valid UTF-8 JSON, else ``{"topic": t, "payload": "<base64>",
  "encoding": "b64"}`` for binary payloads.
* client -> server: ``{"op": "sub"|"unsub", "topic": t}``, or a publish as
  ``{"op": "pub", "topic": t, "payload": <object>}`` (``op`` may be
  omitted for publishes).  A client publishing binary sets
  ``"encoding": "b64"`` and passes base64 text in ``payload``.

Invalid JSON from a client gets an error envelope back; the connection
stays open.
"""

import asyncio
import base64
import binascii
import json
import logging
import mimetypes
import os
from http import HTTPStatus
from pathlib import Path

import websockets
from websockets.datastructures import Headers
from websockets.http11 import Response

from .client import BusClient

log = logging.getLogger(__name__)

DEFAULT_WS_PORT = 7448


def ws_port():
    return int(os.environ.get("HIROS_WS_PORT", str(DEFAULT_WS_PORT)))


def payload_to_envelope(topic, payload):
    try:
        return {"topic": topic, "payload": json.loads(payload.decode("utf-8"))}
    except (UnicodeDecodeError, json.JSONDecodeError):
        return {
            "topic": topic,
            "payload": base64.b64encode(payload).decode("ascii"),
            "encoding": "b64",
        }


def envelope_to_payload(envelope):
    if envelope.get("encoding") == "b64":
        raw = envelope.get("payload")
        if not isinstance(raw, str):
            raise ValueError("b64 payload must be a string")
        try:
            return base64.b64decode(raw.encode("ascii"), validate=True)
        except (binascii.Error, UnicodeEncodeError) as exc:
            raise ValueError(f"invalid base64 payload: {exc}") from None
    return json.dumps(envelope.get("payload")).encode("utf-8")


class WsBridge:
    def __init__(self, port=None, broker_host=None, broker_port=None,
                 static_dir=None):
        self.port = ws_port() if port is None else port
        self.broker_host = broker_host
        self.broker_port = broker_port
        self.static_dir = Path(static_dir) if static_dir else None
        self._server = None

    async def start(self):
        self._server = await websockets.serve(
            self._handler, "0.0.0.0", self.port,
            process_request=self._process_request,
        )
        if self.port == 0:
            self.port = next(iter(self._server.sockets)).getsockname()[1]
        log.info("ws bridge on port %d (static: %s)", self.port,
                 self.static_dir or "off")
        return self

    async def stop(self):
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    def _process_request(self, connection, request):
        # websocket upgrades pass through; anything else is a static fetch
        if "upgrade" in request.headers.get("Connection", "").lower():
            return None
        if self.static_dir is None:
            return connection.respond(HTTPStatus.NOT_FOUND, "no console\n")
        rel = request.path.split("?", 1)[0].lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        try:
            target.relative_to(self.static_dir.resolve())
        except ValueError:
            return connection.respond(HTTPStatus.FORBIDDEN, "forbidden\n")
        if not target.is_file():
            return connection.respond(HTTPStatus.NOT_FOUND, "not found\n")
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        body = target.read_bytes()
        return Response(
            HTTPStatus.OK, "OK",
            Headers([("Content-Type", ctype),
                     ("Content-Length", str(len(body)))]),
            body,
        )

    async def _handler(self, websocket):
        bus = await BusClient.connect(self.broker_host, self.broker_port)
        pump = asyncio.create_task(self._bus_to_ws(bus, websocket))
        try:
            async for message in websocket:
                await self._ws_to_bus(bus, websocket, message)
        except websockets.ConnectionClosed:
            pass
        finally:
            pump.cancel()
            try:
                await pump
            except asyncio.CancelledError:
                pass
            await bus.close()

    async def _bus_to_ws(self, bus, websocket):
        try:
            while True:
                frame = await bus.recv()
                if frame is None:
                    break
                await websocket.send(
                    json.dumps(payload_to_envelope(frame.topic, frame.payload))
                )
        except (ConnectionError, websockets.ConnectionClosed):
            pass

    async def _ws_to_bus(self, bus, websocket, message):
        try:
            envelope = json.loads(message)
            if not isinstance(envelope, dict):
                raise ValueError("envelope must be a JSON object")
            op = envelope.get("op", "pub")
            topic = envelope.get("topic", "")
            if op == "sub":
                await bus.subscribe(topic)
            elif op == "unsub":
                await bus.unsubscribe(topic)
            elif op == "pub":
                await bus.publish(topic, envelope_to_payload(envelope))
            elif op == "ping":
                await bus.ping()
            else:
                raise ValueError(f"unknown op {op!r}")
        except (ValueError, KeyError) as exc:
            await websocket.send(json.dumps({"error": str(exc)}))
