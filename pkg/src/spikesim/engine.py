"""Run orchestration: deterministic, free-running, and multi-process modes.

Three ways to drive the same processor state machines:

* ``DeterministicEngine`` -- single thread, round-robin over processors
  with synchronous message delivery and exhaustive draining between
  actual-time advancements. Reproducible bit-for-bit; this is the mode
  certified against the sequential oracle.
* ``ThreadedEngine`` -- one free-running thread per processor plus an
  environment thread with a wall-clock timeout; delivery through
  thread-safe mailboxes. Exercises the protocol under real interleaving.
* ``run_tcp_node`` / ``run_tcp_launcher`` -- one OS process per processor
  connected over TCP; the launcher doubles as the environment and merges
  per-node trace shards afterwards.
"""

from __future__ import annotations

import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field

from .environment import EnvState
from .neuron import ECState
from .node import NodeState
from .topology import MappingSpec, NetworkSpec, build_post_tables
from .transport import (InProcBackend, Message, TcpBackend, TransportError,
                        load_roster)


@dataclass
class RunResult:
    trace: list[tuple[int, int]]            # every neuron firing (neuron, time)
    outputs: list[tuple[int, int]]          # spikes logged by the environment
    stats: dict[str, int]
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def build_simulation(net: NetworkSpec, mapping: MappingSpec,
                     stimuli: dict[int, list[int]], horizon: int,
                     timeout_ms: int = 50, strict: bool = True,
                     only_node: int | None = None):
    """Instantiate the environment and the compute processors.

    ``only_node`` restricts construction to one processor (multi-process
    mode, where each OS process owns a single node).
    """
    tables = build_post_tables(net, mapping)
    owner_of = dict(mapping.assignment)
    env = EnvState(procs=mapping.procs, stimuli=stimuli, owner_of=owner_of,
                   horizon=horizon, timeout_ms=timeout_ms)
    nodes: dict[int, NodeState] = {}
    for pid in range(1, mapping.procs + 1):
        if only_node is not None and pid != only_node:
            continue
        ecs = {
            nid: ECState(nid, net.neurons[nid], sim_horizon=horizon, strict=strict)
            for nid in tables[pid]
        }
        # Routing must see every neuron's owner, not just local ones.
        nodes[pid] = NodeState(pid, mapping.procs, ecs,
                               post_tables=tables[pid], outputs=set(net.outputs))
    return env, nodes


def aggregate_stats(env: EnvState, nodes: dict[int, NodeState]) -> dict[str, int]:
    stats = env.stats.as_dict()
    for node in nodes.values():
        for key, value in node.stats.as_dict().items():
            stats[key] = stats.get(key, 0) + value
    return stats


def merge_traces(nodes: dict[int, NodeState]) -> list[tuple[int, int]]:
    trace: list[tuple[int, int]] = []
    for node in nodes.values():
        trace.extend(node.trace)
    trace.sort(key=lambda nt: (nt[1], nt[0]))
    return trace


class InvariantMonitor:
    """Samples protocol invariants at controller-loop boundaries.

    Checked properties: the actual time is positive and never decreases;
    the environment's own emission time equals T and dominates every
    processor's emission time magnitude; register and clock magnitudes
    never decrease; register signs match queue emptiness.
    """

    def __init__(self, env: EnvState, nodes: dict[int, NodeState]) -> None:
        self.env = env
        self.nodes = nodes
        self.violations: list[str] = []
        self._prev_T = 0
        self._prev_et = {p: 0 for p in nodes}
        self._prev_pt = {p: 0 for p in nodes}
        self._prev_clock = {p: [0] * (env.procs + 1) for p in nodes}
        self.samples = 0

    def _flag(self, text: str) -> None:
        if len(self.violations) < 50:
            self.violations.append(text)

    def check(self) -> None:
        self.samples += 1
        env = self.env
        if env.T <= 0:
            self._flag(f"T = {env.T} not positive")
        if env.T < self._prev_T:
            self._flag(f"T decreased {self._prev_T} -> {env.T}")
        self._prev_T = env.T
        if env.clock[0] != env.T:
            self._flag(f"environment emission time {env.clock[0]} != T {env.T}")
        for pid, node in self.nodes.items():
            if env.T < abs(node.et):
                self._flag(f"node {pid}: |et| {abs(node.et)} exceeds T {env.T}")
            if env.T < abs(node.pt):
                self._flag(f"node {pid}: |pt| {abs(node.pt)} exceeds T {env.T}")
            if abs(node.et) < self._prev_et[pid]:
                self._flag(f"node {pid}: |et| decreased")
            if abs(node.pt) < self._prev_pt[pid]:
                self._flag(f"node {pid}: |pt| decreased")
            self._prev_et[pid] = abs(node.et)
            self._prev_pt[pid] = abs(node.pt)
            if (node.et >= 0) != (node.cp_live > 0) and node.et != 0:
                self._flag(f"node {pid}: et sign {node.et} vs live {node.cp_live}")
            if (node.pt >= 0) != (len(node.cm_queue) > 0) and node.pt != 0:
                self._flag(f"node {pid}: pt sign {node.pt} vs queue "
                           f"{len(node.cm_queue)}")
            for m in range(env.procs + 1):
                if abs(node.clock[m]) < self._prev_clock[pid][m]:
                    self._flag(f"node {pid}: clock[{m}] magnitude decreased")
                self._prev_clock[pid][m] = abs(node.clock[m])


class DeterministicEngine:
    """Single-threaded reference execution of the distributed protocol.

    Processors are stepped round-robin and messages delivered
    synchronously; the actual time advances only once every queue is
    drained, so events are always consumed in global stamp order and every
    run with the same inputs is identical.
    """

    def __init__(self, net: NetworkSpec, mapping: MappingSpec,
                 stimuli: dict[int, list[int]], horizon: int,
                 minpak: int = 1, check_invariants: bool = True) -> None:
        self.env, self.nodes = build_simulation(net, mapping, stimuli, horizon)
        self.minpak = minpak
        self.monitor = InvariantMonitor(self.env, self.nodes) if check_invariants else None

    def _deliver(self, pairs) -> None:
        for dest, msg in pairs:
            if dest == 0:
                if self.env.on_output(msg):
                    self._advance_pending = True
            else:
                self.nodes[dest].receive(msg)

    def _deliver_broadcast(self, messages: list[Message]) -> None:
        for pid, msg in zip(sorted(self.nodes), messages):
            self.nodes[pid].receive(msg)

    def _global_min_stamp(self) -> int | None:
        """Smallest stamp pending anywhere: queues and staged outboxes."""
        best: int | None = None
        for node in self.nodes.values():
            top = node.cm_queue.peek()
            if top is not None and (best is None or top.stamp < best):
                best = top.stamp
            fore = node.cp_top()
            if fore is not None and (best is None or fore.stamp < best):
                best = fore.stamp
            for staged in node.outboxes.values():
                for ev in staged:
                    if best is None or ev.stamp < best:
                        best = ev.stamp
        return best

    def _drain(self) -> bool:
        """Step every node until nothing moves; True if anything moved.

        Work is offered in global minimum-stamp phases: within one pass,
        processors only see events at or below the smallest stamp pending
        anywhere. Authorization is still decided by the processors
        themselves; the phase bound is pure scheduling and is what makes
        this mode process events in global stamp order, so every run is
        oracle-comparable. Outboxes holding an event at the phase stamp are
        force-flushed so a batched message can never hide the minimum.
        """
        any_progress = False
        while True:
            phase = self._global_min_stamp()
            if phase is None:
                return any_progress
            moved = False
            for pid in sorted(self.nodes):
                node = self.nodes[pid]
                if node.cpc_step(limit=phase):
                    moved = True
                progress, messages = node.cmc_step(self.minpak, limit=phase)
                if progress or messages:
                    moved = True
                self._deliver(messages)
            for pid in sorted(self.nodes):
                node = self.nodes[pid]
                if any(ev.stamp <= phase
                       for staged in node.outboxes.values() for ev in staged):
                    leftovers = node.flush_ready(self.minpak, force=True)
                    if leftovers:
                        moved = True
                        self._deliver(leftovers)
            if not moved:
                return any_progress
            any_progress = True

    def run(self) -> RunResult:
        env = self.env
        self._advance_pending = False
        self._deliver_broadcast(env.advance_T())
        while not env.done:
            self._drain()
            if self.monitor is not None:
                self.monitor.check()
            if self._advance_pending:
                self._advance_pending = False
                self._deliver_broadcast(env.advance_T())
                continue
            self._deliver_broadcast(env.on_timeout())
        violations = list(self.monitor.violations) if self.monitor else []
        return RunResult(
            trace=merge_traces(self.nodes),
            outputs=env.sorted_outputs(),
            stats=aggregate_stats(env, self.nodes),
            violations=violations,
        )


class ThreadedEngine:
    """Free-running execution: one thread per processor, plus the environment.

    The environment advances the actual time when an output message shows a
    processor reached T, or after ``timeout_ms`` of no advancement. The run
    stops when T passes the horizon or when two consecutive quiet
    observations find every processor idle with no stimuli or messages
    outstanding.
    """

    def __init__(self, net: NetworkSpec, mapping: MappingSpec,
                 stimuli: dict[int, list[int]], horizon: int,
                 minpak: int = 1, timeout_ms: int = 20,
                 max_wall_s: float = 60.0) -> None:
        self.env, self.nodes = build_simulation(
            net, mapping, stimuli, horizon, timeout_ms=timeout_ms)
        self.minpak = minpak
        self.timeout_ms = timeout_ms
        self.max_wall_s = max_wall_s
        self.backend = InProcBackend(mapping.procs)
        self._stop = threading.Event()
        self._errors: list[str] = []
        self._errlock = threading.Lock()

    def _node_loop(self, node: NodeState) -> None:
        try:
            while not self._stop.is_set():
                inbound = self.backend.poll(node.id)
                with node.lock:
                    for msg in inbound:
                        node.receive(msg)
                    computed = node.cpc_step()
                    progress, messages = node.cmc_step(self.minpak)
                for dest, msg in messages:
                    self.backend.send(dest, msg)
                if not (inbound or computed or progress or messages):
                    time.sleep(0.0002)
        except Exception as exc:  # noqa: BLE001 - reported as a run violation
            with self._errlock:
                self._errors.append(f"node {node.id}: {exc!r}")
            self._stop.set()

    def _all_idle(self) -> bool:
        if self.env.stimuli_pending() or self.backend.pending():
            return False
        for node in self.nodes.values():
            with node.lock:
                if not node.idle():
                    return False
        return True

    def run(self) -> RunResult:
        env = self.env
        threads = [
            threading.Thread(target=self._node_loop, args=(node,), daemon=True)
            for node in self.nodes.values()
        ]
        for t in threads:
            t.start()
        self._send_broadcast(env.advance_T())
        deadline = time.monotonic() + self.max_wall_s
        last_advance = time.monotonic()
        try:
            while not env.done and not self._stop.is_set():
                if time.monotonic() > deadline:
                    with self._errlock:
                        self._errors.append("wall-clock budget exceeded")
                    break
                advanced = False
                for msg in self.backend.poll(0):
                    if env.on_output(msg):
                        advanced = True
                if advanced:
                    self._send_broadcast(env.advance_T())
                    last_advance = time.monotonic()
                elif time.monotonic() - last_advance >= self.timeout_ms / 1000.0:
                    # With every processor already idle the timeout interval
                    # carries no information; step T without waiting it out.
                    self._send_broadcast(env.on_timeout())
                    last_advance = time.monotonic()
                    if self._all_idle():
                        last_advance -= self.timeout_ms / 1000.0
                else:
                    time.sleep(0.001)
        finally:
            self._stop.set()
            for t in threads:
                t.join(timeout=5.0)
        return RunResult(
            trace=merge_traces(self.nodes),
            outputs=env.sorted_outputs(),
            stats=aggregate_stats(env, self.nodes),
            violations=list(self._errors),
        )

    def _send_broadcast(self, messages: list[Message]) -> None:
        for pid, msg in zip(range(1, self.env.procs + 1), messages):
            self.backend.send(pid, msg)


# -- multi-process (TCP) mode ---------------------------------------------------

TERMINATION_SLACK = 8


def run_tcp_node(net: NetworkSpec, mapping: MappingSpec,
                 stimuli: dict[int, list[int]], horizon: int,
                 node_id: int, roster_path: str, minpak: int = 1) -> NodeState:
    """Run one compute processor against live TCP peers until T passes
    the horizon; returns the node for trace extraction."""
    roster = load_roster(roster_path)
    _env, nodes = build_simulation(net, mapping, stimuli, horizon,
                                   only_node=node_id)
    node = nodes[node_id]
    backend = TcpBackend(node_id, roster)

    def ship(pairs) -> None:
        for dest, msg in pairs:
            try:
                backend.send(dest, msg)
            except TransportError:
                # The peer terminated; only possible once the run is over.
                pass

    try:
        while abs(node.clock[0]) <= horizon + TERMINATION_SLACK:
            inbound = backend.poll()
            for msg in inbound:
                node.receive(msg)
            computed = node.cpc_step()
            progress, messages = node.cmc_step(minpak)
            ship(messages)
            if not (inbound or computed or progress or messages):
                time.sleep(0.0005)
        ship(node.flush_ready(minpak, force=True))
    finally:
        backend.close()
    return node


def run_tcp_launcher(net: NetworkSpec, mapping: MappingSpec,
                     stimuli: dict[int, list[int]], horizon: int,
                     roster_path: str, node_argv: list[list[str]],
                     timeout_ms: int = 20,
                     max_wall_s: float = 120.0) -> RunResult:
    """Spawn one subprocess per compute processor and act as the environment.

    ``node_argv`` holds the full command line for each node process; each
    node writes its firing trace to a shard file merged by the caller.
    """
    roster = load_roster(roster_path)
    env, _ = build_simulation(net, mapping, stimuli, horizon,
                              timeout_ms=timeout_ms, only_node=-1)
    procs = [subprocess.Popen(argv) for argv in node_argv]
    errors: list[str] = []
    backend = None
    try:
        backend = TcpBackend(0, roster)
        self_broadcast(backend, env.advance_T())
        deadline = time.monotonic() + max_wall_s
        last_advance = time.monotonic()
        while not env.done:
            if time.monotonic() > deadline:
                errors.append("wall-clock budget exceeded")
                break
            advanced = False
            for msg in backend.poll():
                if env.on_output(msg):
                    advanced = True
            if advanced:
                self_broadcast(backend, env.advance_T())
                last_advance = time.monotonic()
            elif time.monotonic() - last_advance >= timeout_ms / 1000.0:
                self_broadcast(backend, env.on_timeout())
                last_advance = time.monotonic()
            else:
                time.sleep(0.001)
        # Keep broadcasting the final time until every node has exited, so
        # none is left waiting on a clock it will never see again.
        settle = time.monotonic() + 10.0
        while any(p.poll() is None for p in procs):
            if time.monotonic() > settle:
                break
            for msg in backend.poll():
                env.on_output(msg)
            self_broadcast(backend, env._broadcast())
            time.sleep(0.05)
    finally:
        if backend is not None:
            backend.close()
        for p in procs:
            try:
                p.wait(timeout=15.0)
            except subprocess.TimeoutExpired:
                p.kill()
                errors.append("node process killed after timeout")
    for p in procs:
        if p.returncode not in (0, None):
            errors.append(f"node process exited with {p.returncode}")
    return RunResult(trace=[], outputs=env.sorted_outputs(),
                     stats=env.stats.as_dict(), violations=errors)


def self_broadcast(backend: TcpBackend, messages: list[Message]) -> None:
    for pid, msg in enumerate(messages, start=1):
        try:
            backend.send(pid, msg)
        except TransportError:
            # Node already terminated and closed its sockets.
            pass
