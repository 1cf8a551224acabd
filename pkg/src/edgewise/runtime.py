"""Hypercube message fabric.

``2**k`` endpoints with ``k``-bit ids exchange messages only along hypercube
edges.  Worker programs are generator functions ``program(ep, ...)`` that
send with :meth:`Endpoint.neighbor_send` and receive with
``payload = yield ep.neighbor_recv(dim, tag)``; nested stages compose with
``yield from``.  The same program runs unchanged on both backends:

* ``"sim"`` drives all workers round-robin in one thread, each until it
  blocks, so results and counters are reproducible run to run.
* ``"par"`` runs one thread per worker with blocking channels.

Each message carries its sender's logical step and modelled communication
time, so the receiver can keep Lamport-style clocks.  With per-message
latency ``tau`` and per-value cost ``mu`` the clock ``comm_time`` follows
the critical path of the exchange pattern.
"""

from __future__ import annotations

import inspect
import json
import os
import threading
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import Any, Hashable

import numpy as np

from .varset import full_mask, popcount, worker_label

MAX_SIM_DIM = 20


class FabricError(RuntimeError):
    pass


class FabricDeadlock(FabricError):
    pass


@dataclass(frozen=True)
class FabricMessage:
    tag: Hashable
    address: Any
    payload: np.ndarray
    step: int = 0
    comm_time: float = 0.0


@dataclass(frozen=True)
class Recv:
    """A pending receive; yielded by worker programs."""

    src: int
    dim: int
    tag: Hashable


@dataclass
class EndpointCounters:
    sent_msgs: int = 0
    sent_bytes: int = 0
    sent_values: int = 0
    recv_msgs: int = 0
    idle_steps: int = 0

    def as_dict(self) -> dict:
        return {
            "sent_msgs": self.sent_msgs,
            "sent_bytes": self.sent_bytes,
            "recv_msgs": self.recv_msgs,
            "idle_steps": self.idle_steps,
        }


class Endpoint:
    """One worker's view of the fabric."""

    def __init__(self, fabric: "HypercubeFabric", rank: int):
        self.fabric = fabric
        self.rank = rank
        self.k = fabric.k
        self.counters = EndpointCounters()
        self.ops: Counter = Counter()
        self.step = 0
        self.comm_time = 0.0
        self.stage: str | None = None
        self.table_bytes = 0
        self.peak_table_bytes = 0
        self._tables: dict[str, int] = {}

    @property
    def label(self) -> str:
        return worker_label(self.rank, self.k)

    @property
    def is_root(self) -> bool:
        return self.rank == full_mask(self.k)

    def neighbor(self, dim: int) -> int:
        if not 1 <= dim <= self.k:
            raise FabricError(f"dimension {dim} outside 1..{self.k} on endpoint {self.label!r}")
        return self.rank ^ (1 << (dim - 1))

    def neighbor_send(self, dim: int, tag: Hashable, payload, address=None) -> None:
        dst = self.neighbor(dim)
        data = np.array(payload, dtype=np.float64, copy=True)
        data.setflags(write=False)
        cost = self.fabric.tau + self.fabric.mu * data.size
        msg = FabricMessage(tag, address, data, self.step, self.comm_time + cost)
        c = self.counters
        c.sent_msgs += 1
        c.sent_bytes += data.nbytes
        c.sent_values += data.size
        self.fabric._deliver(self.rank, dst, dim, msg)

    def neighbor_recv(self, dim: int, tag: Hashable) -> Recv:
        return Recv(self.neighbor(dim), dim, tag)

    def _accept(self, msg: FabricMessage) -> np.ndarray:
        self.counters.recv_msgs += 1
        self.step = max(self.step, msg.step)
        self.comm_time = max(self.comm_time, msg.comm_time)
        return msg.payload

    def track(self, name: str, array: np.ndarray) -> np.ndarray:
        """Account ``array`` as a resident score table under ``name``."""
        self.table_bytes += array.nbytes - self._tables.get(name, 0)
        self._tables[name] = array.nbytes
        self.peak_table_bytes = max(self.peak_table_bytes, self.table_bytes)
        return array

    def release(self, name: str) -> None:
        self.table_bytes -= self._tables.pop(name, 0)


class HypercubeFabric:
    backend = "abstract"

    def __init__(self, k: int, tau: float = 0.0, mu: float = 0.0):
        if k < 0:
            raise FabricError("hypercube dimension must be non-negative")
        self.k = k
        self.size = 1 << k
        self.tau = tau
        self.mu = mu
        self.endpoints = [Endpoint(self, r) for r in range(self.size)]
        self.traffic: Counter = Counter()
        self._channels: dict[tuple, deque] = defaultdict(deque)

    def __repr__(self):
        return f"{type(self).__name__}(k={self.k})"

    def neighbors(self, rank: int) -> list[int]:
        return [rank ^ (1 << j) for j in range(self.k)]

    def _deliver(self, src: int, dst: int, dim: int, msg: FabricMessage) -> None:
        self.traffic[(src, dst)] += 1
        self._channels[(dst, src, msg.tag)].append(msg)

    def _take(self, rank: int, req: Recv):
        q = self._channels.get((rank, req.src, req.tag))
        if q:
            msg = q.popleft()
            if not q:
                del self._channels[(rank, req.src, req.tag)]
            return msg
        return None

    def pending_dump(self) -> list[dict]:
        return [
            {"dst": worker_label(dst, self.k), "src": worker_label(src, self.k),
             "tag": repr(tag), "count": len(q)}
            for (dst, src, tag), q in sorted(self._channels.items(), key=repr)
            if q
        ]

    def run(self, program, *args, per_worker=None, **kwargs) -> list:
        """Run ``program(ep, *args, **kwargs)`` on every endpoint.

        ``per_worker[r]`` (a dict) adds keyword arguments for endpoint ``r``.
        Returns the per-endpoint return values.
        """
        raise NotImplementedError

    def _start(self, program, rank, args, per_worker, kwargs):
        kw = dict(kwargs)
        if per_worker is not None:
            kw.update(per_worker[rank])
        return program(self.endpoints[rank], *args, **kw)

    def _fail(self, rank: int, exc: BaseException) -> FabricError:
        ep = self.endpoints[rank]
        stage = ep.stage or "?"
        err = FabricError(f"endpoint {ep.label!r} failed in stage {stage!r}: {exc}")
        err.stage = stage
        return err

    # -- instrumentation -------------------------------------------------

    def reset_counters(self) -> None:
        for ep in self.endpoints:
            ep.counters = EndpointCounters()
            ep.ops = Counter()
            ep.step = 0
            ep.comm_time = 0.0
            ep.table_bytes = 0
            ep.peak_table_bytes = 0
            ep._tables = {}
        self.traffic = Counter()

    def locality_violations(self) -> list[tuple[int, int]]:
        return [pair for pair in self.traffic if popcount(pair[0] ^ pair[1]) != 1]

    def counters(self) -> list[dict]:
        return [{"id": ep.label, **ep.counters.as_dict()} for ep in self.endpoints]

    def counters_json(self, **extra) -> str:
        body = {"k": self.k, "backend": self.backend, "endpoints": self.counters()}
        body.update(extra)
        return json.dumps(body, indent=2)


def _check_request(req) -> Recv:
    if not isinstance(req, Recv):
        raise FabricError(f"worker programs may only yield receive requests, got {req!r}")
    return req


class SimulatedFabric(HypercubeFabric):
    """Single-threaded, deterministic round-robin execution."""

    backend = "sim"

    def run(self, program, *args, per_worker=None, **kwargs) -> list:
        p = self.size
        results: list = [None] * p
        gens: list = [None] * p
        waiting: list = [None] * p
        done = [False] * p
        for r in range(p):
            try:
                out = self._start(program, r, args, per_worker, kwargs)
            except FabricError:
                raise
            except Exception as exc:
                raise self._fail(r, exc) from exc
            if inspect.isgenerator(out):
                gens[r] = out
            else:
                results[r] = out
                done[r] = True
        started = [False] * p
        while not all(done):
            progress = False
            for r in range(p):
                if done[r]:
                    continue
                ran = False
                while True:
                    if not started[r]:
                        value = None
                        started[r] = True
                    else:
                        msg = self._take(r, waiting[r])
                        if msg is None:
                            break
                        value = self.endpoints[r]._accept(msg)
                    ran = True
                    try:
                        waiting[r] = _check_request(gens[r].send(value))
                    except StopIteration as stop:
                        results[r] = stop.value
                        done[r] = True
                        break
                    except FabricError:
                        raise
                    except Exception as exc:
                        raise self._fail(r, exc) from exc
                if ran:
                    progress = True
                elif not done[r]:
                    self.endpoints[r].counters.idle_steps += 1
            if not progress:
                raise FabricDeadlock(self._deadlock_report(waiting, done))
        return results

    def _deadlock_report(self, waiting, done) -> str:
        lines = ["no endpoint can make progress:"]
        for r, req in enumerate(waiting):
            if not done[r] and req is not None:
                ep = self.endpoints[r]
                lines.append(
                    f"  endpoint {ep.label!r} (stage {ep.stage!r}) waits on tag {req.tag!r} "
                    f"from {worker_label(req.src, self.k)!r}"
                )
        pending = self.pending_dump()
        lines.append(f"  pending messages: {pending if pending else 'none'}")
        return "\n".join(lines)


class ThreadedFabric(HypercubeFabric):
    """One thread per endpoint; only per-channel FIFO order is guaranteed."""

    backend = "par"

    def __init__(self, k: int, tau: float = 0.0, mu: float = 0.0, timeout: float = 300.0):
        super().__init__(k, tau, mu)
        self.timeout = timeout
        self._cond = threading.Condition()

    def _deliver(self, src, dst, dim, msg):
        with self._cond:
            super()._deliver(src, dst, dim, msg)
            self._cond.notify_all()

    def run(self, program, *args, per_worker=None, **kwargs) -> list:
        p = self.size
        results: list = [None] * p
        errors: list = []
        waiting: dict[int, Recv] = {}
        state = {"alive": p, "abort": None}
        cond = self._cond

        def stuck() -> bool:
            if len(waiting) < state["alive"]:
                return False
            return all(self._channels.get((r, q.src, q.tag)) is None for r, q in waiting.items())

        def blocking_take(r: int, req: Recv):
            with cond:
                while True:
                    if state["abort"] is not None:
                        raise state["abort"]
                    msg = self._take(r, req)
                    if msg is not None:
                        waiting.pop(r, None)
                        return msg
                    waiting[r] = req
                    if stuck():
                        err = FabricDeadlock(self._deadlock_report(waiting))
                        state["abort"] = err
                        cond.notify_all()
                        raise err
                    self.endpoints[r].counters.idle_steps += 1
                    if not cond.wait(self.timeout):
                        err = FabricDeadlock(
                            f"endpoint {worker_label(r, self.k)!r} timed out after "
                            f"{self.timeout}s waiting on {req.tag!r}\n" + self._deadlock_report(waiting)
                        )
                        state["abort"] = err
                        cond.notify_all()
                        raise err

        def worker(r: int):
            try:
                out = self._start(program, r, args, per_worker, kwargs)
                if inspect.isgenerator(out):
                    value = None
                    while True:
                        try:
                            req = _check_request(out.send(value))
                        except StopIteration as stop:
                            results[r] = stop.value
                            break
                        msg = blocking_take(r, req)
                        value = self.endpoints[r]._accept(msg)
                else:
                    results[r] = out
            except FabricError as exc:
                errors.append(exc)
            except Exception as exc:
                err = self._fail(r, exc)
                err.__cause__ = exc
                errors.append(err)
                with cond:
                    if state["abort"] is None:
                        state["abort"] = err
            finally:
                with cond:
                    state["alive"] -= 1
                    waiting.pop(r, None)
                    cond.notify_all()

        threads = [threading.Thread(target=worker, args=(r,), daemon=True) for r in range(p)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            # report the root cause, not the aborts it triggered in other workers
            primary = [e for e in errors if e is state["abort"]] or errors
            raise primary[0]
        return results

    def _deadlock_report(self, waiting) -> str:
        lines = ["no endpoint can make progress:"]
        for r, req in sorted(waiting.items()):
            ep = self.endpoints[r]
            lines.append(
                f"  endpoint {ep.label!r} (stage {ep.stage!r}) waits on tag {req.tag!r} "
                f"from {worker_label(req.src, self.k)!r}"
            )
        pending = self.pending_dump()
        lines.append(f"  pending messages: {pending if pending else 'none'}")
        return "\n".join(lines)


def max_parallel_workers() -> int:
    return max(64, 8 * (os.cpu_count() or 1))


def spawn(k: int, backend: str = "sim", tau: float = 0.0, mu: float = 0.0, **options) -> HypercubeFabric:
    """Create a fabric with ``2**k`` endpoints."""
    if k < 0:
        raise FabricError("hypercube dimension must be non-negative")
    if backend == "sim":
        if k > MAX_SIM_DIM:
            raise FabricError(f"simulated fabric supports k <= {MAX_SIM_DIM}, got {k}")
        return SimulatedFabric(k, tau, mu)
    if backend == "par":
        limit = options.pop("max_workers", None) or max_parallel_workers()
        if (1 << k) > limit:
            raise FabricError(f"insufficient workers available: need {1 << k}, limit is {limit}")
        return ThreadedFabric(k, tau, mu, **options)
    raise FabricError(f"unknown backend {backend!r}; expected 'sim' or 'par'")


def reduce_program(ep: Endpoint, value, tag: Hashable = "reduce"):
    """Fold ``log-sum-exp`` of one value per endpoint onto the all-ones id.

    Round ``j`` pairs endpoints across dimension ``j``; the one whose bit
    ``j`` is set keeps ``logaddexp(own, received)``.  Non-root endpoints
    return ``None``.
    """
    acc = np.asarray(value, dtype=np.float64)
    r = ep.rank
    for j in range(1, ep.k + 1):
        b = 1 << (j - 1)
        if r & b:
            other = yield ep.neighbor_recv(j, (tag, j))
            acc = np.logaddexp(acc, other)
        else:
            ep.neighbor_send(j, (tag, j), acc)
            return None
    return acc


def reduce_logsumexp(fabric: HypercubeFabric, values) -> np.ndarray:
    """Run :func:`reduce_program` over ``values[r]`` and return the root result."""
    results = fabric.run(reduce_program, per_worker=[{"value": v} for v in values])
    return results[fabric.size - 1]


def hypercube_fold(values) -> np.ndarray:
    """Serial replay of the reduce fold order, for bitwise comparison."""
    vals = [np.asarray(v, dtype=np.float64) for v in values]
    p = len(vals)
    k = p.bit_length() - 1
    if 1 << k != p:
        raise ValueError("need a power-of-two number of values")
    for j in range(1, k + 1):
        b = 1 << (j - 1)
        low = b - 1
        for r in range(p):
            if r & b and (r & low) == low:
                vals[r] = np.logaddexp(vals[r], vals[r ^ b])
    return vals[p - 1]
