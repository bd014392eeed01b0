"""One agent of the UDP testbed.

The agent owns a socket, waits for the start barrier, then ticks: broadcast
its state, collect neighbor packets, evaluate the control law on delayed
states and integrate one Euler step. Communication delay is enforced on
receipt: a packet stamped ``ts`` is usable only from logical time
``ts + tau2`` on.

Two clocks are supported. ``realtime`` ticks on the wall clock every
``step`` seconds and uses whatever has arrived. ``lockstep`` runs on
logical time alone and blocks until every packet a step needs is present,
which makes the run deterministic.
"""

from __future__ import annotations

import json
import math
import select
import socket
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import BarrierTimeout, PeerTimeout
from ..plant import ControlLaw, DelayedStates, control_input
from ..sim import delay_offsets
from ..topology import Topology
from .packet import ACK, StatePacket, decode, encode, is_state_packet, parse_control

__all__ = ["AgentProcessConfig", "AgentStats", "run_agent"]

SILENCE_STEPS = 50


@dataclass
class AgentProcessConfig:
    agent_id: int
    listen_port: int
    adjacency: list
    peers: dict  # out-neighbor id -> [host, port]
    law: str
    tau1: float
    tau2: float
    step: float
    delta: float
    initial_positions: list
    initial_velocities: list
    run_steps: int
    log_path: str
    host: str = "127.0.0.1"
    mode: str = "lockstep"
    velocity_tap: str = "internal"
    barrier_timeout: float = 20.0
    lockstep_timeout: float = 10.0

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "AgentProcessConfig":
        data = json.loads(text)
        data["peers"] = {int(k): v for k, v in data["peers"].items()}
        return cls(**data)

    def validate(self) -> None:
        topo = Topology(np.asarray(self.adjacency, dtype=float))
        expected = set(topo.out_neighbors(self.agent_id))
        if set(self.peers) != expected:
            raise ValueError(
                f"agent {self.agent_id}: peer table {sorted(self.peers)} does not match out-neighbors {sorted(expected)}"
            )
        if self.mode not in ("lockstep", "realtime"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class AgentStats:
    sent: int = 0
    received: int = 0
    dropped_out_of_order: int = 0
    late_ticks: int = 0
    max_lateness_s: float = 0.0
    wall_time_s: float = 0.0
    extra: dict = field(default_factory=dict)


class _Mailbox:
    """Per-neighbor delay queue: accepted packets wait until they are old enough."""

    def __init__(self, x0: float, v0: float):
        self.queue = deque()
        self.current = None  # freshest eligible packet
        self.init = (x0, v0)
        self.last_seq = -1
        self.latest_seq = -1
        self.last_heard = time.monotonic()

    def offer(self, pkt: StatePacket) -> bool:
        if pkt.sequence <= self.last_seq:
            return False
        self.last_seq = pkt.sequence
        self.latest_seq = pkt.sequence
        self.last_heard = time.monotonic()
        self.queue.append(pkt)
        return True

    def release(self, horizon_us: int):
        while self.queue and self.queue[0].timestamp_us <= horizon_us:
            self.current = self.queue.popleft()
        return self.current

    def value(self):
        if self.current is None:
            return self.init
        return self.current.x, self.current.v


def _standalone_input(law: ControlLaw, v_self: float) -> float:
    # an agent with no in-neighbors keeps only its self-damping term
    return -v_self if not law.uses_neighbor_velocity else 0.0


def _barrier(sock: socket.socket, timeout: float, backlog: list) -> int:
    deadline = time.monotonic() + timeout
    while True:
        left = deadline - time.monotonic()
        if left <= 0:
            raise BarrierTimeout("no GO received before the barrier timeout")
        sock.settimeout(left)
        try:
            data, addr = sock.recvfrom(2048)
        except socket.timeout:
            continue
        if is_state_packet(data):
            backlog.append(data)
            continue
        kind, arg = parse_control(data)
        if kind == "READY?":
            sock.sendto(ACK, addr)
        elif kind == "GO":
            return arg


def run_agent(cfg: AgentProcessConfig) -> AgentStats:
    """Run one agent to completion and write its logs next to ``cfg.log_path``."""
    cfg.validate()
    topo = Topology(np.asarray(cfg.adjacency, dtype=float))
    law = ControlLaw.parse(cfg.law)
    n, me = topo.n, cfg.agent_id
    x0s = np.asarray(cfg.initial_positions, dtype=float)
    v0s = np.asarray(cfg.initial_velocities, dtype=float)
    in_nb = topo.in_neighbors(me)
    boxes = {j: _Mailbox(x0s[j], v0s[j]) for j in in_nb}
    targets = [(cfg.peers[j][0], int(cfg.peers[j][1])) for j in sorted(cfg.peers)]
    h = cfg.step
    step_us = int(round(h * 1e6))
    tau2_us = int(round(cfg.tau2 * 1e6))
    d1, f1 = delay_offsets(cfg.tau1, h)
    sat = (lambda v: min(max(v, -cfg.delta), cfg.delta))
    tap = sat if cfg.velocity_tap == "saturated" else (lambda v: v)
    stats = AgentStats()

    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 22)
    sock.bind((cfg.host, cfg.listen_port))
    backlog: list = []
    start_us = _barrier(sock, cfg.barrier_timeout, backlog)
    sock.setblocking(False)

    def accept(data):
        if not is_state_packet(data):
            return
        pkt = decode(data)
        box = boxes.get(pkt.agent_id)
        if box is None:
            return
        stats.received += 1
        if not box.offer(pkt):
            stats.dropped_out_of_order += 1

    for data in backlog:
        accept(data)

    def drain():
        while True:
            try:
                data = sock.recv(2048)
            except (BlockingIOError, InterruptedError):
                return
            accept(data)

    wait = start_us / 1e6 - time.time()
    if wait > 0:
        time.sleep(wait)
    t_wall0 = time.monotonic()

    xs = np.empty(cfg.run_steps + 1)
    vs = np.empty(cfg.run_steps + 1)
    us = np.empty(cfg.run_steps + 1)
    audit = []
    xs[0], vs[0] = x0s[me], v0s[me]
    own0 = (x0s[me], v0s[me])

    def own_delayed(k):
        i0, i1 = k - d1, k - d1 - 1
        y0 = (xs[i0], vs[i0]) if i0 >= 0 else own0
        if f1 == 0.0:
            return y0
        y1 = (xs[i1], vs[i1]) if i1 >= 0 else own0
        return (1 - f1) * y0[0] + f1 * y1[0], (1 - f1) * y0[1] + f1 * y1[1]

    x1 = np.zeros(n)
    v1 = np.zeros(n)
    x2 = np.zeros(n)
    v2 = np.zeros(n)
    for k in range(cfg.run_steps + 1):
        now_us = k * step_us
        if cfg.mode == "realtime":
            target = t_wall0 + k * h
            lag = time.monotonic() - target
            if lag < 0:
                time.sleep(-lag)
            elif lag > h:
                stats.late_ticks += 1
                stats.max_lateness_s = max(stats.max_lateness_s, lag)
        pkt = encode(StatePacket(me, k, now_us, float(xs[k]), float(vs[k])))
        for addr in targets:
            sock.sendto(pkt, addr)
            stats.sent += 1
        drain()
        horizon_us = now_us - tau2_us
        if cfg.mode == "lockstep" and horizon_us >= 0:
            need = horizon_us // step_us
            deadline = time.monotonic() + cfg.lockstep_timeout
            for j, box in boxes.items():
                while box.latest_seq < need:
                    left = deadline - time.monotonic()
                    if left <= 0:
                        raise PeerTimeout(j)
                    select.select([sock], [], [], left)
                    drain()
        elif cfg.mode == "realtime":
            silent = time.monotonic() - SILENCE_STEPS * h
            for j, box in boxes.items():
                if k > SILENCE_STEPS and box.last_heard < silent:
                    raise PeerTimeout(j)
        xa, va = own_delayed(k)
        x1[me], v1[me] = xa, tap(va)
        for j, box in boxes.items():
            cur = box.release(horizon_us)
            xj, vj = box.value()
            x2[j], v2[j] = xj, tap(vj)
            audit.append((k, j, -1 if cur is None else cur.sequence, -1 if cur is None else cur.timestamp_us))
        if in_nb:
            u = control_input(law, topo, DelayedStates(x1, v1, x2, v2), me)
        else:
            u = _standalone_input(law, v1[me])
        us[k] = u
        if k < cfg.run_steps:
            xs[k + 1] = xs[k] + h * sat(vs[k])
            vs[k + 1] = vs[k] + h * u
    stats.wall_time_s = time.monotonic() - t_wall0
    sock.close()

    log = Path(cfg.log_path)
    times = np.arange(cfg.run_steps + 1) * h
    with log.open("w", newline="") as fh:
        fh.write(f"t,x{me + 1},v{me + 1}\n")
        for t, x, v in zip(times, xs, vs):
            fh.write(f"{t:.9g},{x:.9g},{v:.9g}\n")
    with log.with_suffix(".audit.csv").open("w", newline="") as fh:
        fh.write("step,t_us,neighbor,packet_seq,packet_ts_us\n")
        for k, j, seq, ts in audit:
            fh.write(f"{k},{k * step_us},{j},{seq},{ts}\n")
    log.with_suffix(".stats.json").write_text(json.dumps(asdict(stats), indent=1))
    return stats
