"""Spawn local agent processes, release them together and merge their logs."""

from __future__ import annotations

import socket
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import BarrierTimeout, LogGap, SpawnFailure
from ..plant import ControlLaw, DelayPair
from ..sim import Trajectory, Verdict, analyze
from ..topology import Topology
from .agent import AgentProcessConfig
from .packet import READY, go_message, parse_control

__all__ = ["RunManifest", "NetbedResult", "orchestrate", "free_ports"]


def free_ports(count: int, host: str = "127.0.0.1") -> list:
    """Ask the OS for ``count`` currently unused UDP ports."""
    socks, ports = [], []
    for _ in range(count):
        s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        s.bind((host, 0))
        socks.append(s)
        ports.append(s.getsockname()[1])
    for s in socks:
        s.close()
    return ports


@dataclass
class RunManifest:
    """Everything needed to launch one testbed run."""

    topology: Topology
    law: ControlLaw
    delays: DelayPair
    horizon: float
    initial_positions: list
    initial_velocities: list | None = None
    step: float = 0.01
    delta: float = 50.0
    ports: list | None = None
    host: str = "127.0.0.1"
    mode: str = "lockstep"
    velocity_tap: str = "internal"

    def agent_configs(self, workdir: Path) -> list:
        n = self.topology.n
        ports = self.ports if self.ports is not None else free_ports(n, self.host)
        if len(ports) != n:
            raise SpawnFailure(f"manifest lists {len(ports)} ports for {n} agents")
        if len(set(ports)) != len(ports):
            raise SpawnFailure(f"duplicate ports in manifest: {ports}")
        v0 = self.initial_velocities if self.initial_velocities is not None else [0.0] * n
        steps = int(round(self.horizon / self.step))
        adj = self.topology.adjacency.tolist()
        out = []
        for i in range(n):
            peers = {j: [self.host, ports[j]] for j in self.topology.out_neighbors(i)}
            out.append(AgentProcessConfig(
                agent_id=i, listen_port=int(ports[i]), adjacency=adj, peers=peers,
                law=ControlLaw.parse(self.law).value, tau1=self.delays.tau1, tau2=self.delays.tau2,
                step=self.step, delta=self.delta,
                initial_positions=[float(v) for v in self.initial_positions],
                initial_velocities=[float(v) for v in v0], run_steps=steps,
                log_path=str(workdir / f"agent{i}.csv"), host=self.host, mode=self.mode,
                velocity_tap=self.velocity_tap,
            ))
        return out


@dataclass
class NetbedResult:
    trajectory: Trajectory
    verdict: Verdict
    workdir: Path
    missing_samples: int = 0
    agent_stats: list = field(default_factory=list)


def _barrier(configs, host, timeout=20.0, lead=0.2) -> None:
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.bind((host, 0))
    try:
        pending = {(c.host, c.listen_port) for c in configs}
        deadline = time.monotonic() + timeout
        while pending:
            if time.monotonic() > deadline:
                raise BarrierTimeout(f"agents on {sorted(p for _, p in pending)} never acknowledged")
            for addr in pending:
                sock.sendto(READY, addr)
            sock.settimeout(0.05)
            end = time.monotonic() + 0.05
            while time.monotonic() < end:
                try:
                    data, addr = sock.recvfrom(64)
                except socket.timeout:
                    break
                try:
                    kind, _ = parse_control(data)
                except ValueError:
                    continue
                if kind == "ACK":
                    pending.discard(addr)
        start_us = time.time_ns() // 1000 + int(lead * 1e6)
        for c in configs:
            sock.sendto(go_message(start_us), (c.host, c.listen_port))
    finally:
        sock.close()


def _merge(configs, step, horizon_steps):
    n = len(configs)
    xs = np.full((horizon_steps + 1, n), np.nan)
    vs = np.full((horizon_steps + 1, n), np.nan)
    for c in configs:
        path = Path(c.log_path)
        if not path.exists():
            continue
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            continue
        k = np.rint(data[:, 0] / step).astype(int)
        ok = (k >= 0) & (k <= horizon_steps)
        xs[k[ok], c.agent_id] = data[ok, 1]
        vs[k[ok], c.agent_id] = data[ok, 2]
    complete = ~(np.isnan(xs).any(axis=1) | np.isnan(vs).any(axis=1))
    missing = int((~complete).sum())
    return np.nonzero(complete)[0], xs[complete], vs[complete], missing


def orchestrate(manifest: RunManifest, workdir=None, *, tol: float = 1e-2, window: float = 10.0,
                timeout: float | None = None) -> NetbedResult:
    """Run the testbed and classify the merged trajectory.

    Raises
    ------
    SpawnFailure
        On duplicate ports (before anything starts) or if an agent exits
        abnormally.
    LogGap
        If more than 1 % of the samples are missing after merging.
    """
    workdir = Path(workdir) if workdir is not None else Path(tempfile.mkdtemp(prefix="netbed-"))
    workdir.mkdir(parents=True, exist_ok=True)
    configs = manifest.agent_configs(workdir)
    procs = []
    try:
        for c in configs:
            cfg_path = workdir / f"agent{c.agent_id}.json"
            cfg_path.write_text(c.to_json())
            err = (workdir / f"agent{c.agent_id}.err").open("w")
            procs.append((subprocess.Popen(
                [sys.executable, "-m", "satdelay.netbed", "agent", str(cfg_path)],
                stdout=subprocess.DEVNULL, stderr=err,
            ), err))
    except OSError as exc:
        for p, _ in procs:
            p.kill()
        raise SpawnFailure(str(exc)) from exc
    steps = int(round(manifest.horizon / manifest.step))
    limit = timeout if timeout is not None else 60.0 + 4.0 * manifest.horizon
    try:
        _barrier(configs, manifest.host)
        deadline = time.monotonic() + limit
        for p, _ in procs:
            p.wait(timeout=max(0.1, deadline - time.monotonic()))
    except (BarrierTimeout, subprocess.TimeoutExpired) as exc:
        for p, _ in procs:
            p.kill()
        raise SpawnFailure(f"agents did not finish: {exc}") from exc
    finally:
        for _, err in procs:
            err.close()
    failed = [(c.agent_id, p.returncode) for c, (p, _) in zip(configs, procs) if p.returncode != 0]
    if failed:
        details = "; ".join(
            f"agent {i} exit {rc}: {(workdir / f'agent{i}.err').read_text().strip().splitlines()[-1:]}"
            for i, rc in failed)
        raise SpawnFailure(details)
    idx, xs, vs, missing = _merge(configs, manifest.step, steps)
    if missing > 0.01 * (steps + 1):
        raise LogGap(f"{missing} of {steps + 1} samples missing")
    traj = Trajectory.from_states(idx * manifest.step, np.hstack([xs, vs]))
    traj.to_csv(workdir / "merged.csv")
    stats = [(workdir / f"agent{c.agent_id}.stats.json").read_text() for c in configs]
    return NetbedResult(traj, analyze(traj, tol=tol, window=window), workdir, missing, stats)
