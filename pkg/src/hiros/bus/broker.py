"""Topic broker: at-most-once delivery, per-subscriber FIFO, drop-oldest.

Everything runs on one asyncio loop, so queue manipulation needs no
locking.  Each client gets a writer task that drains its subscription
queues; a stalled client therefore backs up only its own queues, which
cap at ``queue_bound`` messages by evicting the oldest entry.
"""

import asyncio
import collections
import itertools
import logging

from ..errors import FormatError
from .framing import BusFrame, MsgType, encode_frame, read_frame

log = logging.getLogger(__name__)

DEFAULT_PORT = 7447
QUEUE_BOUND = 64


class Subscription:
    __slots__ = ("topic", "queue", "dropped", "enqueued", "delivered")

    def __init__(self, topic):
        self.topic = topic
        self.queue = collections.deque()
        self.dropped = 0
        self.enqueued = 0
        self.delivered = 0

    def snapshot(self):
        return {
            "topic": self.topic,
            "queued": len(self.queue),
            "dropped": self.dropped,
            "enqueued": self.enqueued,
            "delivered": self.delivered,
        }


class _Client:
    __slots__ = ("cid", "reader", "writer", "subs", "control", "wake",
                 "writer_task", "closed")

    def __init__(self, cid, reader, writer):
        self.cid = cid
        self.reader = reader
        self.writer = writer
        self.subs = {}  # topic -> Subscription
        self.control = collections.deque()  # PONGs
        self.wake = asyncio.Event()
        self.writer_task = None
        self.closed = False


class Broker:
    def __init__(self, host="127.0.0.1", port=DEFAULT_PORT,
                 queue_bound=QUEUE_BOUND):
        self.host = host
        self.port = port
        self.queue_bound = queue_bound
        self._server = None
        self._clients = {}
        self._ids = itertools.count(1)
        self.published = 0

    async def start(self):
        self._server = await asyncio.start_server(
            self._handle_client, self.host, self.port
        )
        if self.port == 0:
            self.port = self._server.sockets[0].getsockname()[1]
        log.info("broker listening on %s:%d", self.host, self.port)
        return self

    async def stop(self):
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for client in list(self._clients.values()):
            await self._drop_client(client)

    async def serve_forever(self):
        await self._server.serve_forever()

    # -- stats (used by tests and the console) ------------------------------

    def stats(self):
        return {
            "published": self.published,
            "clients": {
                c.cid: [s.snapshot() for s in c.subs.values()]
                for c in self._clients.values()
            },
        }

    # -- internals -----------------------------------------------------------

    async def _handle_client(self, reader, writer):
        client = _Client(next(self._ids), reader, writer)
        self._clients[client.cid] = client
        client.writer_task = asyncio.create_task(self._write_loop(client))
        log.debug("client %d connected", client.cid)
        try:
            while True:
                frame = await read_frame(reader)
                if frame is None:
                    break
                self._dispatch(client, frame)
                # hand the loop to writer tasks so bursts drain as they
                # arrive instead of piling into the bounded queues
                await asyncio.sleep(0)
        except FormatError as exc:
            log.warning("client %d sent malformed data: %s", client.cid, exc)
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            await self._drop_client(client)

    def _dispatch(self, client, frame):
        if frame.msg_type is MsgType.PUB:
            self.published += 1
            self._route(frame)
        elif frame.msg_type is MsgType.SUB:
            if frame.topic not in client.subs:
                client.subs[frame.topic] = Subscription(frame.topic)
        elif frame.msg_type is MsgType.UNSUB:
            client.subs.pop(frame.topic, None)
        elif frame.msg_type is MsgType.PING:
            client.control.append(BusFrame(MsgType.PONG, "", frame.payload))
            client.wake.set()
        # PONG from a client is ignored

    def _route(self, frame):
        for client in self._clients.values():
            sub = client.subs.get(frame.topic)
            if sub is None or client.closed:
                continue
            if len(sub.queue) >= self.queue_bound:
                sub.queue.popleft()
                sub.dropped += 1
            sub.queue.append(frame)
            sub.enqueued += 1
            client.wake.set()

    async def _write_loop(self, client):
        try:
            while True:
                await client.wake.wait()
                client.wake.clear()
                progress = True
                while progress:  # one frame per subscription per pass
                    progress = False
                    if client.control:
                        client.writer.write(encode_frame(client.control.popleft()))
                        await client.writer.drain()
                        progress = True
                    for sub in list(client.subs.values()):
                        if not sub.queue:
                            continue
                        client.writer.write(encode_frame(sub.queue.popleft()))
                        # handed to the transport: that is our at-most-once
                        # delivery point, even if drain() then backpressures
                        sub.delivered += 1
                        await client.writer.drain()
                        progress = True
        except (ConnectionError, asyncio.CancelledError):
            pass

    async def _drop_client(self, client):
        if client.closed:
            return
        client.closed = True
        self._clients.pop(client.cid, None)
        if client.writer_task is not None:
            client.writer_task.cancel()
            try:
                await client.writer_task
            except asyncio.CancelledError:
                pass
        try:
            client.writer.close()
            # a stalled peer never drains its buffered frames; abort
            # rather than wait forever on a graceful close
            await asyncio.wait_for(client.writer.wait_closed(), timeout=0.5)
        except (ConnectionError, OSError, asyncio.TimeoutError):
            transport = client.writer.transport
            if transport is not None:
                transport.abort()
        log.debug("client %d dropped", client.cid)
