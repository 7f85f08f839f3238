"""
Socket Event Publishing

Registered listeners receive events over a TCP stream socket the dashboard
opens to their endpoint at registration time. Every event is one frame:
a 4-byte big-endian length followed by the UTF-8 JSON envelope
``{"topic": ..., "seq": ..., "body": ...}``.

Each listener has its own bounded queue drained by its own sender thread,
so publishing never waits on a socket. When a queue is full the oldest
frame is dropped and the listener's drop counter is incremented.
"""

import json
import logging
import socket
import socketserver
import struct
import threading
import time
from collections import deque

from app.errors import ConflictError, ListenerUnreachableError, NotFoundError, TransportError

logger = logging.getLogger(__name__)

HEADER = struct.Struct(">I")
MAX_FRAME_BYTES = 16 * 1024 * 1024


# ============================================================================
# FRAMING
# ============================================================================

def encode_frame(envelope):
    body = json.dumps(envelope, separators=(",", ":")).encode("utf-8")
    return HEADER.pack(len(body)) + body


def read_frame(stream):
    """
    Read one frame from a binary file-like stream.

    Returns:
        dict | None: The decoded envelope, or None on a clean end of stream

    Raises:
        TransportError: On a truncated or oversized frame
    """
    header = _read_exact(stream, HEADER.size)
    if header is None:
        return None
    (length,) = HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise TransportError(f"frame of {length} bytes exceeds the {MAX_FRAME_BYTES} byte limit")
    body = _read_exact(stream, length)
    if body is None:
        raise TransportError("stream closed inside a frame")
    return json.loads(body.decode("utf-8"))


def _read_exact(stream, size):
    chunks = []
    remaining = size
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            if remaining == size:
                return None
            raise TransportError("stream closed inside a frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


# ============================================================================
# PUBLISHING
# ============================================================================

class ListenerChannel:
    """One registered listener: its socket, bounded queue and sender thread."""

    def __init__(self, subscription, sock, queue_size):
        self.subscription = subscription
        self.queue_size = queue_size
        self.delivered = 0
        self.dropped = 0
        self.closed = False
        self._sock = sock
        self._queue = deque()
        self._inflight = 0
        self._cond = threading.Condition()
        self._thread = threading.Thread(
            target=self._run, name=f"listener-{subscription.listener_id}", daemon=True
        )
        self._thread.start()

    @property
    def listener_id(self):
        return self.subscription.listener_id

    def wants(self, topic):
        return not self.closed and topic in self.subscription.topics

    def offer(self, frame):
        with self._cond:
            if len(self._queue) >= self.queue_size:
                self._queue.popleft()
                self.dropped += 1
                logger.warning(f"listener '{self.listener_id}' queue full, dropped oldest event")
            self._queue.append(frame)
            self._cond.notify_all()

    def _run(self):
        while True:
            with self._cond:
                while not self._queue and not self.closed:
                    self._cond.wait()
                if self.closed:
                    return
                frame = self._queue.popleft()
                self._inflight += 1
            try:
                self._sock.sendall(frame)
            except OSError as exc:
                logger.warning(f"listener '{self.listener_id}' connection lost: {exc}")
                with self._cond:
                    self._inflight -= 1
                    self.closed = True
                    self._cond.notify_all()
                return
            with self._cond:
                self._inflight -= 1
                self.delivered += 1
                self._cond.notify_all()

    def flush(self, timeout):
        """Wait until every queued frame has been written to the socket."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while (self._queue or self._inflight) and not self.closed:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cond.wait(remaining)
        return True

    def close(self):
        with self._cond:
            self.closed = True
            self._cond.notify_all()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    def stats(self):
        return {
            "listener_id": self.listener_id,
            "endpoint": self.subscription.endpoint,
            "topics": sorted(self.subscription.topics),
            "delivered": self.delivered,
            "dropped": self.dropped,
            "queued": len(self._queue),
            "connected": not self.closed,
        }


class EventBus:
    """
    Topic fan-out to registered socket listeners.

    Args:
        queue_size (int): Per-listener queue bound
        connect_timeout (float): Seconds allowed for the registration connect
    """

    def __init__(self, queue_size=1024, connect_timeout=2.0):
        self.queue_size = queue_size
        self.connect_timeout = connect_timeout
        self.published = 0
        self._seq = 0
        self._channels = {}
        self._lock = threading.Lock()

    def register(self, subscription):
        """
        Connect to the listener's endpoint and start delivering its topics.

        Raises:
            ConflictError: If the listener id is already registered
            ListenerUnreachableError: If the endpoint refuses the connection
        """
        with self._lock:
            if subscription.listener_id in self._channels:
                raise ConflictError(f"listener '{subscription.listener_id}' is already registered")
        try:
            sock = socket.create_connection((subscription.host, subscription.port), timeout=self.connect_timeout)
        except OSError as exc:
            raise ListenerUnreachableError(f"cannot reach listener at {subscription.endpoint}: {exc}") from exc
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        channel = ListenerChannel(subscription, sock, self.queue_size)
        with self._lock:
            self._channels[subscription.listener_id] = channel
        logger.info(f"listener '{subscription.listener_id}' registered at {subscription.endpoint}")
        return subscription.listener_id

    def deregister(self, listener_id):
        with self._lock:
            channel = self._channels.pop(listener_id, None)
        if channel is None:
            raise NotFoundError(f"unknown listener '{listener_id}'")
        channel.flush(timeout=self.connect_timeout)
        channel.close()
        logger.info(f"listener '{listener_id}' deregistered")

    def publish(self, topic, body):
        """
        Queue one event for every listener subscribed to ``topic``.

        Returns:
            int: Number of listeners the event was queued for
        """
        with self._lock:
            self._seq += 1
            self.published += 1
            frame = encode_frame({"topic": topic, "seq": self._seq, "body": body})
            targets = [c for c in self._channels.values() if c.wants(topic)]
            for channel in targets:
                channel.offer(frame)
        return len(targets)

    def flush(self, timeout=5.0):
        with self._lock:
            channels = list(self._channels.values())
        return all(c.flush(timeout) for c in channels)

    def metrics(self):
        with self._lock:
            listeners = [c.stats() for c in self._channels.values()]
        return {
            "events_published": self.published,
            "events_delivered": sum(s["delivered"] for s in listeners),
            "events_dropped": sum(s["dropped"] for s in listeners),
            "listeners": listeners,
        }

    def close(self):
        with self._lock:
            channels = list(self._channels.values())
            self._channels.clear()
        for channel in channels:
            channel.flush(timeout=1.0)
            channel.close()


# ============================================================================
# RECEIVING
# ============================================================================

class _ThreadingServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class FrameReceiver:
    """
    A listener endpoint that collects every event it is sent.

    Used by the simulator's audit listener and by the tests.

    Example:
        >>> receiver = FrameReceiver().start()
        >>> dashboard.register_listener(Subscription("audit", *receiver.address, TOPICS))
        >>> receiver.wait_for(10)
    """

    def __init__(self, host="127.0.0.1", port=0):
        self.events = []
        self._cond = threading.Condition()
        receiver = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                while True:
                    try:
                        envelope = read_frame(self.rfile)
                    except (TransportError, OSError, ValueError) as exc:
                        logger.warning(f"event stream broken: {exc}")
                        return
                    if envelope is None:
                        return
                    receiver._record(envelope)

        self._server = _ThreadingServer((host, port), Handler)
        self._thread = None

    @property
    def address(self):
        return self._server.server_address[:2]

    @property
    def endpoint(self):
        host, port = self.address
        return f"{host}:{port}"

    def start(self):
        self._thread = threading.Thread(target=self._server.serve_forever, name="frame-receiver", daemon=True)
        self._thread.start()
        return self

    def _record(self, envelope):
        with self._cond:
            self.events.append(envelope)
            self._cond.notify_all()

    def wait_for(self, count, timeout=5.0):
        """Block until at least ``count`` events arrived; False on timeout."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while len(self.events) < count:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cond.wait(remaining)
        return True

    def topic(self, name):
        with self._cond:
            return [e for e in self.events if e["topic"] == name]

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
