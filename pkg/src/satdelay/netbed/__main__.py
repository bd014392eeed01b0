"""Entry point for agent subprocesses: ``python -m satdelay.netbed agent CONFIG``."""

import sys
from pathlib import Path

from ..errors import SatDelayError
from .agent import AgentProcessConfig, run_agent


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2 or argv[0] != "agent":
        print("usage: python -m satdelay.netbed agent CONFIG.json", file=sys.stderr)
        return 1
    cfg = AgentProcessConfig.from_json(Path(argv[1]).read_text())
    try:
        run_agent(cfg)
    except SatDelayError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
