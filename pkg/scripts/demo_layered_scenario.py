#!/usr/bin/env python3
"""Walk the layered self-healing scenario end to end and narrate it.

A component fails with a kind no repair strategy covers.  The repair loop
keeps failing until its deep analysis fires; the strategies layer then
intercepts the run, synthesizes the missing strategy directly into the
running loop, and the same run repairs the component.

    python scripts/demo_layered_scenario.py
"""

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from megaloop import build_engine  # noqa: E402
from megaloop.clock import VirtualClock  # noqa: E402
from megaloop.reflection import set_trigger_now  # noqa: E402


def main() -> int:
    def sink(instance, entry):
        detail = f" -> {entry.detail}" if entry.detail else ""
        indent = "    " if instance == "selfRepairStrategies" else "  "
        print(f"{indent}[{entry.time:5.2f}s] {instance:<20} {entry.kind:<10} "
              f"{entry.name}{detail}")

    engine, script = build_engine(
        REPO / "fixtures/lds/layered-strategies.ld",
        REPO / "fixtures/flds",
        script=REPO / "fixtures/scenarios/layered-poison.script",
        clock=VirtualClock(), trace_sink=sink)
    set_trigger_now(engine, "selfRepair", "mRUBiS", "RtException; 0.2s; Monitor;")

    print("strategies before:", engine.model_of("selfRepair", "RepairStrategies").body)
    engine.run(duration=4, script=script)
    print("strategies after: ", engine.model_of("selfRepair", "RepairStrategies").body)
    print("failed components:", engine.software["mrubis"].failed_components() or "none")
    return 0


if __name__ == "__main__":
    sys.exit(main())
