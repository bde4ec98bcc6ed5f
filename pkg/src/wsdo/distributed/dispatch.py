"""Coordinator-side worker registry and remote dispatch.

Jobs are assigned to idle live workers advertising the needed capability
(at most one in-flight SOLVE per worker); anything left over, and anything
that fails after one retry on a different worker, is solved in-process.
Solvers are deterministic and payloads round-trip exactly, so results do
not depend on where a job ran.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from ..errors import ProtocolError, WsdoError
from ..nhatc import NodeResult, SolveJob, execute_job
from .protocol import DirectionGuard, MessageCounter, WireMessage, recv_message, send_message

log = logging.getLogger(__name__)

DEFAULT_SOLVE_TIMEOUT = 30.0


@dataclass
class WorkerEndpoint:
    host: str
    port: int
    capabilities: List[str] = field(default_factory=list)   # empty = everything

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def can_solve(self, kind: str) -> bool:
        return not self.capabilities or kind in self.capabilities


def load_worker_config(path) -> List[WorkerEndpoint]:
    """JSON list of {host, port, capabilities}."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise ProtocolError("worker config must be a JSON list")
    return [
        WorkerEndpoint(host=e["host"], port=int(e["port"]),
                       capabilities=list(e.get("capabilities", [])))
        for e in doc
    ]


class WorkerClient:
    """One persistent connection to a worker; request/reply correlated."""

    def __init__(self, endpoint: WorkerEndpoint, timeout: float):
        self.endpoint = endpoint
        self.timeout = timeout
        self.sock: Optional[socket.socket] = None
        self.counter = MessageCounter()
        self.guard = DirectionGuard()
        self.capabilities: List[str] = list(endpoint.capabilities)
        self.alive = False

    def connect(self) -> None:
        self.sock = socket.create_connection(
            (self.endpoint.host, self.endpoint.port), timeout=self.timeout
        )
        self.counter = MessageCounter()
        self.guard = DirectionGuard()
        hello = self._request("HELLO", {})
        if hello.type != "HELLO":
            raise ProtocolError(f"expected HELLO reply, got {hello.type}")
        advertised = hello.payload.get("capabilities", [])
        if not self.endpoint.capabilities:
            self.capabilities = list(advertised)
        self.alive = True

    def _request(self, mtype: str, payload: dict) -> WireMessage:
        msg_id = self.counter.allocate()
        send_message(self.sock, WireMessage(mtype, msg_id, payload))
        while True:
            reply = recv_message(self.sock)
            if reply is None:
                raise ProtocolError("connection closed while awaiting reply")
            self.guard.check(reply)
            if reply.payload.get("in_reply_to") == msg_id:
                return reply
            log.debug("ignoring out-of-band %s", reply.type)

    def can_solve(self, kind: str) -> bool:
        return not self.capabilities or kind in self.capabilities

    def solve(self, job: SolveJob) -> NodeResult:
        reply = self._request("SOLVE", {"job": job.to_dict()})
        if reply.type == "ERROR":
            raise WsdoError(
                f"worker {self.endpoint.address}: "
                f"{reply.payload.get('code')}: {reply.payload.get('message')}"
            )
        if reply.type != "RESULT":
            raise ProtocolError(f"expected RESULT, got {reply.type}")
        return NodeResult.from_dict(reply.payload["result"])

    def ping(self) -> bool:
        try:
            return self._request("PING", {}).type == "PONG"
        except (OSError, WsdoError):
            return False

    def shutdown(self) -> None:
        if self.sock is not None:
            try:
                send_message(self.sock, WireMessage("SHUTDOWN", self.counter.allocate(), {}))
            except OSError:
                pass
            self.close()

    def close(self) -> None:
        self.alive = False
        if self.sock is not None:
            try:
                self.sock.close()
            except OSError:
                pass
            self.sock = None


class WorkerRegistry:
    """Live worker clients built from static endpoints (no discovery)."""

    def __init__(self, endpoints: Sequence[WorkerEndpoint], timeout: float):
        self.clients = [WorkerClient(e, timeout) for e in endpoints]
        self._lock = threading.Lock()

    def live_clients(self) -> List[WorkerClient]:
        with self._lock:
            out = []
            for client in self.clients:
                if not client.alive:
                    try:
                        client.connect()
                    except (OSError, WsdoError) as exc:
                        log.warning("worker %s unavailable: %s",
                                    client.endpoint.address, exc)
                        client.close()
                        continue
                out.append(client)
            return out

    def close(self, send_shutdown: bool = False) -> None:
        for client in self.clients:
            if send_shutdown and client.alive:
                client.shutdown()
            else:
                client.close()


class RemoteDispatcher:
    """Barrier dispatch over TCP workers with in-process fallback."""

    def __init__(self, endpoints: Sequence[WorkerEndpoint],
                 timeout: float = DEFAULT_SOLVE_TIMEOUT):
        self.registry = WorkerRegistry(endpoints, timeout)
        self.timeout = timeout
        self.placements: Dict[str, str] = {}
        self.retries = 0
        self.fallbacks = 0
        self._impls: Dict[str, object] = {}

    def _solve_remote(self, client: WorkerClient, job: SolveJob) -> NodeResult:
        try:
            return client.solve(job)
        except (OSError, WsdoError):
            client.close()
            raise

    def dispatch(self, jobs: Sequence[SolveJob], impls: Dict[str, object]) -> List[NodeResult]:
        self._impls = impls
        jobs = list(jobs)
        clients = self.registry.live_clients()
        assignment: Dict[int, WorkerClient] = {}
        busy = set()
        for i, job in enumerate(jobs):
            for client in clients:
                if id(client) in busy or not client.can_solve(job.kind):
                    continue
                assignment[i] = client
                busy.add(id(client))
                break

        results: List[Optional[NodeResult]] = [None] * len(jobs)

        def run_remote(i: int, client: WorkerClient):
            job = jobs[i]
            try:
                results[i] = self._solve_remote(client, job)
                self.placements[job.node_id] = f"worker:{client.endpoint.address}"
                return
            except (OSError, WsdoError) as exc:
                log.warning("worker %s failed on %s: %s; retrying elsewhere",
                            client.endpoint.address, job.node_id, exc)
            # one retry on a different idle live worker
            self.retries += 1
            for other in self.registry.live_clients():
                if other is client or id(other) in busy or not other.can_solve(job.kind):
                    continue
                busy.add(id(other))
                try:
                    results[i] = self._solve_remote(other, job)
                    self.placements[job.node_id] = f"worker:{other.endpoint.address}"
                    return
                except (OSError, WsdoError) as exc:
                    log.warning("retry on %s failed: %s", other.endpoint.address, exc)
                break
            self.fallbacks += 1
            try:
                results[i] = execute_job(job, self._impls.get(job.node_id))
                self.placements[job.node_id] = "in-process"
            except Exception as exc:
                log.error("in-process fallback for %s failed: %s", job.node_id, exc)
                results[i] = NodeResult(node_id=job.node_id, values={},
                                        objective=float("nan"), status="error",
                                        payload={"error": str(exc)})

        threads = []
        for i, client in assignment.items():
            t = threading.Thread(target=run_remote, args=(i, client), daemon=True)
            t.start()
            threads.append(t)
        for i, job in enumerate(jobs):
            if i in assignment:
                continue
            results[i] = execute_job(job, impls.get(job.node_id))
            self.placements[job.node_id] = "in-process"
        for t in threads:
            t.join()
        return [r for r in results if r is not None]

    def describe(self) -> dict:
        return {
            "mode": "distributed",
            "workers": [c.endpoint.address for c in self.registry.clients],
            "retries": self.retries,
            "fallbacks": self.fallbacks,
        }

    def close(self, send_shutdown: bool = False) -> None:
        self.registry.close(send_shutdown=send_shutdown)
