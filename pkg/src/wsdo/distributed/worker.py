"""TCP worker: executes node solves for a coordinator.

One compute task runs at a time per connection; control traffic (PING,
SHUTDOWN) is answered concurrently by the reader thread while a SOLVE is in
flight.  A SHUTDOWN message stops the whole server.
"""

from __future__ import annotations

import json
import logging
import queue
import socket
import threading
from typing import List, Optional, Sequence

from ..errors import ProtocolError, WsdoError
from ..nhatc import NODE_KINDS, SolveJob, build_node_impl, execute_job
from .protocol import (
    DirectionGuard,
    Framer,
    MessageCounter,
    WireMessage,
    recv_message,
    send_message,
)

log = logging.getLogger(__name__)

_SENTINEL = object()


class _ConnectionHandler:
    def __init__(self, sock, server: "WorkerServer"):
        self.sock = sock
        self.server = server
        self.counter = MessageCounter()
        self.guard = DirectionGuard()
        self.write_lock = threading.Lock()
        self.jobs: "queue.Queue" = queue.Queue()
        self.compute_thread = threading.Thread(target=self._compute_loop, daemon=True)

    def _send(self, mtype: str, payload: dict) -> None:
        with self.write_lock:
            send_message(self.sock, WireMessage(mtype, self.counter.allocate(), payload))

    def _compute_loop(self) -> None:
        while True:
            item = self.jobs.get()
            if item is _SENTINEL:
                return
            request_id, job_doc = item
            try:
                job = SolveJob.from_dict(job_doc)
                result = execute_job(job, impl=self.server.impl_for(job.kind, job.params))
                self._send("RESULT", {"in_reply_to": request_id,
                                      "result": result.to_dict()})
            except Exception as exc:   # diagnostic travels to the coordinator
                log.warning("solve failed: %s", exc)
                try:
                    self._send("ERROR", {"in_reply_to": request_id,
                                         "code": "solve-failed",
                                         "message": f"{type(exc).__name__}: {exc}"})
                except OSError:
                    return

    def run(self) -> None:
        self.compute_thread.start()
        try:
            while True:
                try:
                    msg = recv_message(self.sock)
                except WsdoError as exc:
                    # framing/protocol violation: reply ERROR, drop connection
                    try:
                        self._send("ERROR", {"code": "protocol-error", "message": str(exc)})
                    except OSError:
                        pass
                    return
                if msg is None:
                    return
                try:
                    self.guard.check(msg)
                except ProtocolError as exc:
                    self._send("ERROR", {"code": "protocol-error", "message": str(exc)})
                    return
                if msg.type == "HELLO":
                    self._send("HELLO", {"in_reply_to": msg.msg_id,
                                         "capabilities": self.server.capabilities})
                elif msg.type == "PING":
                    self._send("PONG", {"in_reply_to": msg.msg_id})
                elif msg.type == "SOLVE":
                    job_doc = msg.payload.get("job")
                    kind = (job_doc or {}).get("kind")
                    if not job_doc:
                        self._send("ERROR", {"in_reply_to": msg.msg_id,
                                             "code": "bad-request",
                                             "message": "SOLVE payload needs a job"})
                    elif kind not in self.server.capabilities:
                        self._send("ERROR", {"in_reply_to": msg.msg_id,
                                             "code": "unknown-capability",
                                             "message": f"kind {kind!r} not served here"})
                    else:
                        self.jobs.put((msg.msg_id, job_doc))
                elif msg.type == "SHUTDOWN":
                    self.server.request_shutdown()
                    return
                else:
                    self._send("ERROR", {"in_reply_to": msg.msg_id,
                                         "code": "unexpected-type",
                                         "message": f"{msg.type} not valid here"})
        except OSError:
            return
        finally:
            self.jobs.put(_SENTINEL)
            try:
                self.sock.close()
            except OSError:
                pass


class WorkerServer:
    """Accept loop plus per-connection handlers; stoppable via SHUTDOWN."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 capabilities: Optional[Sequence[str]] = None):
        self.capabilities = sorted(capabilities) if capabilities else sorted(NODE_KINDS)
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.2)
        self.host, self.port = self._listener.getsockname()[:2]
        self._shutdown = threading.Event()
        self._threads: List[threading.Thread] = []
        self._conns: List[socket.socket] = []
        self._impl_cache: dict = {}
        self._impl_lock = threading.Lock()

    def impl_for(self, kind: str, params: dict):
        """Reuse node implementations across SOLVEs (their memo caches too)."""
        key = (kind, json.dumps(params, sort_keys=True))
        with self._impl_lock:
            impl = self._impl_cache.get(key)
            if impl is None:
                impl = build_node_impl(kind, params)
                if len(self._impl_cache) >= 16:
                    self._impl_cache.clear()
                self._impl_cache[key] = impl
            return impl

    def request_shutdown(self) -> None:
        self._shutdown.set()

    def serve_forever(self) -> None:
        try:
            while not self._shutdown.is_set():
                try:
                    sock, _ = self._listener.accept()
                except socket.timeout:
                    continue
                except OSError:
                    break
                handler = _ConnectionHandler(sock, self)
                self._conns.append(sock)
                thread = threading.Thread(target=handler.run, daemon=True)
                thread.start()
                self._threads.append(thread)
        finally:
            self._listener.close()

    def close(self) -> None:
        """Hard stop: sever live connections as a process kill would."""
        self.request_shutdown()
        try:
            self._listener.close()
        except OSError:
            pass
        for conn in self._conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass


def worker_serve(host: str = "127.0.0.1", port: int = 0,
                 capabilities: Optional[Sequence[str]] = None,
                 ready: Optional["threading.Event"] = None,
                 announce=None) -> int:
    """Run a worker until SHUTDOWN; returns the port it served on.

    ``announce(host, port)`` is called once the socket is bound (the CLI
    prints it, tests grab it).
    """
    server = WorkerServer(host=host, port=port, capabilities=capabilities)
    if announce:
        announce(server.host, server.port)
    if ready is not None:
        ready.set()
    log.info("worker listening on %s:%d (%s)", server.host, server.port,
             ",".join(server.capabilities))
    server.serve_forever()
    return server.port
