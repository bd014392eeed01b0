"""UDP testbed running each agent as its own process."""

from .agent import AgentProcessConfig, AgentStats, run_agent
from .orchestrator import NetbedResult, RunManifest, free_ports, orchestrate
from .packet import PACKET_SIZE, StatePacket, decode, encode

__all__ = [
    "AgentProcessConfig",
    "AgentStats",
    "run_agent",
    "NetbedResult",
    "RunManifest",
    "free_ports",
    "orchestrate",
    "PACKET_SIZE",
    "StatePacket",
    "decode",
    "encode",
]
