"""Deterministic mock of a component-based adaptable system.

A nine-component marketplace-style application with restart/replace
effectors and a synthetic load counter, plus the software-operation
implementations every fixture loop dispatches to.  Identical injection
scripts always produce identical event logs and final system states.

Operation implementations receive an OperationContext and a dict of
runtime models keyed by slot name (megamodel-ref slots arrive as live
ReflectionHandles).  They return the exit-compartment name.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .runtime import EngineError

DEFAULT_COMPONENTS = (
    ("c1", "UserInterface"),
    ("c2", "Authentication"),
    ("c3", "ItemManagement"),
    ("c4", "BidAndBuy"),
    ("c5", "InventoryService"),
    ("c6", "ReputationService"),
    ("c7", "PersistenceService"),
    ("c8", "QueryService"),
    ("c9", "AvailabilityMonitor"),
)

DEFAULT_CONNECTORS = (
    ("c1", "c2"), ("c1", "c3"), ("c1", "c4"), ("c3", "c5"), ("c4", "c5"),
    ("c4", "c6"), ("c5", "c7"), ("c6", "c7"), ("c8", "c7"), ("c9", "c8"),
)

# failure kinds with a specific event subtype; everything else raises the base type
EVENT_FOR_KIND = {"oom": "OutOfMemoryRtException"}
BASE_FAILURE_EVENT = "RtException"
LOAD_EVENT = "LoadIncrease"

DEFAULT_LOAD_THRESHOLD = 0.8


@dataclass
class Component:
    id: str
    name: str
    lifecycle: str = "started"  # started | stopped | failed
    params: dict = field(default_factory=dict)
    failure_kind: str | None = None


@dataclass
class SystemState:
    components: dict[str, Component] = field(default_factory=dict)
    connectors: list[tuple[str, str]] = field(default_factory=list)
    load: float = 0.2


def default_system_state() -> SystemState:
    state = SystemState()
    for cid, name in DEFAULT_COMPONENTS:
        state.components[cid] = Component(cid, name, params={"poolSize": 4, "version": 1})
    state.connectors = list(DEFAULT_CONNECTORS)
    return state


class AdaptableSystem:
    """The layer-0 software module: owns the SystemState, emits events."""

    def __init__(self, source_name: str = "mRUBiS", state: SystemState | None = None):
        self.source_name = source_name
        self.state = state or default_system_state()
        self._engine = None

    def attach_engine(self, engine) -> None:
        self._engine = engine

    def _emit(self, type_name: str, payload: dict) -> None:
        if self._engine is not None:
            self._engine.emit(type_name, self.source_name, payload)

    def inject_failure(self, component_id: str, kind: str) -> None:
        component = self.state.components.get(component_id)
        if component is None:
            raise EngineError("E-NO-COMPONENT", f"no component {component_id!r}")
        component.lifecycle = "failed"
        component.failure_kind = kind
        self._emit(EVENT_FOR_KIND.get(kind, BASE_FAILURE_EVENT),
                   {"component": component_id, "kind": kind})

    def set_load(self, value: float) -> None:
        previous = self.state.load
        self.state.load = value
        if value > previous:
            self._emit(LOAD_EVENT, {"load": value})

    def failed_components(self) -> dict[str, str]:
        return {c.id: c.failure_kind for c in self.state.components.values()
                if c.lifecycle == "failed"}

    def projection(self) -> dict:
        """The architectural mirror of the current system state."""
        return {
            "components": {
                c.id: {"name": c.name, "lifecycle": c.lifecycle,
                       "params": copy.deepcopy(c.params), "failureKind": c.failure_kind}
                for c in self.state.components.values()
            },
            "connectors": [list(pair) for pair in self.state.connectors],
            "load": self.state.load,
        }


class HarnessOps:
    """Software-operation implementations backed by one AdaptableSystem."""

    def __init__(self, system: AdaptableSystem):
        self.system = system

    # -- monitoring ------------------------------------------------------------

    def update(self, ctx, models) -> str:
        arch = models["ArchitecturalModel"]
        arch.body = self.system.projection()
        arch.body["annotations"] = {}
        arch.body["plan"] = []
        return "done"

    # -- self-repair analysis ----------------------------------------------------

    def check_failures(self, ctx, models) -> str:
        arch = models["ArchitecturalModel"].body
        failed = {cid: data["failureKind"]
                  for cid, data in arch.get("components", {}).items()
                  if data["lifecycle"] == "failed"}
        arch.setdefault("annotations", {})["failures"] = failed
        return "failures" if failed else "no_failures"

    def deep_check(self, ctx, models) -> str:
        arch = models["ArchitecturalModel"].body
        annotations = arch.setdefault("annotations", {})
        annotations["rootCauses"] = dict(annotations.get("failures", {}))
        return "done"

    # -- self-repair planning and execution -----------------------------------------

    def repair(self, ctx, models) -> str:
        arch = models["ArchitecturalModel"].body
        strategies = models["RepairStrategies"].body
        annotations = arch.setdefault("annotations", {})
        plan = arch.setdefault("plan", [])
        unresolved = []
        for cid, kind in sorted(annotations.get("failures", {}).items()):
            action = strategies.get(kind)
            if action is None:
                unresolved.append(kind)
            else:
                plan.append({"action": action, "component": cid})
        annotations["unresolved"] = unresolved
        return "no_strategy" if unresolved else "planned"

    def effect(self, ctx, models) -> str:
        arch = models["ArchitecturalModel"].body
        for entry in arch.get("plan", []):
            self._apply(entry)
        arch["plan"] = []
        arch.setdefault("annotations", {})["effected"] = True
        return "done"

    def _apply(self, entry: dict) -> None:
        action = entry["action"]
        if action == "set-param":
            component = self.system.state.components.get(entry["component"])
            if component is not None:
                component.params[entry["param"]] = entry["value"]
            if "load" in entry:
                self.system.state.load = entry["load"]
            return
        component = self.system.state.components.get(entry["component"])
        if component is None:
            return
        component.lifecycle = "started"
        component.failure_kind = None
        if action == "replace":
            component.params["version"] = component.params.get("version", 1) + 1

    # -- self-optimization ----------------------------------------------------------

    def analyze_bottleneck(self, ctx, models) -> str:
        arch = models["ArchitecturalModel"].body
        threshold = models["QueueingModel"].body.get("threshold", DEFAULT_LOAD_THRESHOLD)
        bottleneck = arch.get("load", 0.0) > threshold
        arch.setdefault("annotations", {})["bottleneck"] = bottleneck
        return "bottlenecks" if bottleneck else "no_bottlenecks"

    def plan_params(self, ctx, models) -> str:
        arch = models["ArchitecturalModel"].body
        variability = models["ParameterVariability"].body
        component = variability.get("component", "c8")
        param = variability.get("param", "poolSize")
        step = variability.get("step", 4)
        current = arch.get("components", {}).get(component, {}).get("params", {})
        arch.setdefault("plan", []).append({
            "action": "set-param", "component": component, "param": param,
            "value": current.get(param, 0) + step,
            "load": arch.get("load", 0.0) * variability.get("loadFactor", 0.5),
        })
        return "done"

    # -- strategies loop (procedural reflection) ---------------------------------------

    def _missing_kinds(self, view: dict) -> list[str]:
        arch = view["models"].get("ArchitecturalModel", {})
        strategies = view["models"].get("RepairStrategies", {})
        causes = arch.get("annotations", {}).get("rootCauses", {})
        return sorted({kind for kind in causes.values() if kind not in strategies})

    def check_strategies(self, ctx, models) -> str:
        view = models["feedbackLoopModel"].query()
        return "strategies_missing" if self._missing_kinds(view) else "strategies_ok"

    def synthesize_strategies(self, ctx, models) -> str:
        handle = models["feedbackLoopModel"]
        view = handle.query()
        strategies = dict(view["models"].get("RepairStrategies", {}))
        for kind in self._missing_kinds(view):
            strategies[kind] = "replace"
        handle.replace_model("RepairStrategies", strategies)
        return "done"

    # -- strategies loop (declarative reflection) ----------------------------------------

    def observe_loop(self, ctx, models) -> str:
        mirror = models["SelfRepairModel"]
        target = ctx.sensed[0] if ctx.sensed else None
        if target is None:
            raise EngineError("E-MODEL-MISSING", "observe needs a sensed module")
        view = ctx.engine.reflect_query(target)
        mirror.body = {
            "target": target,
            "runCount": view["runCount"],
            "strategies": view["models"].get("RepairStrategies", {}),
            "rootCauses": view["models"].get("ArchitecturalModel", {})
                              .get("annotations", {}).get("rootCauses", {}),
        }
        return "done"

    def assess_strategies(self, ctx, models) -> str:
        body = models["SelfRepairModel"].body
        missing = sorted({kind for kind in body.get("rootCauses", {}).values()
                          if kind not in body.get("strategies", {})})
        body["missing"] = missing
        return "strategies_missing" if missing else "strategies_ok"

    def synthesize_declarative(self, ctx, models) -> str:
        body = models["SelfRepairModel"].body
        strategies = dict(body.get("strategies", {}))
        for kind in body.get("missing", []):
            strategies[kind] = "replace"
        body["strategies"] = strategies
        return "done"

    def enact_strategies(self, ctx, models) -> str:
        body = models["SelfRepairModel"].body
        ctx.engine.reflect_edit(body["target"],
                                ("replaceModel", "RepairStrategies", body["strategies"]))
        return "done"

    # -- offline software update ----------------------------------------------------------

    def create_model(self, ctx, models) -> str:
        arch = models["ArchitecturalModel"]
        arch.body = self.system.projection()
        arch.body["plan"] = []
        return "done"

    def reconfigure(self, ctx, models) -> str:
        arch = models["ArchitecturalModel"].body
        rules = models["ReplacementRules"].body
        for cid, action in sorted(rules.items()):
            arch.setdefault("plan", []).append({"action": action, "component": cid})
        return "done"

    def apply_update(self, ctx, models) -> str:
        arch = models["ArchitecturalModel"].body
        for entry in arch.get("plan", []):
            self._apply(entry)
        arch["plan"] = []
        return "done"

    def registry(self) -> dict:
        """Default operation bindings, keyed by op name or megamodel-qualified name."""
        return {
            "Update": self.update,
            "CheckForFailures": self.check_failures,
            "DeepCheck": self.deep_check,
            "Repair": self.repair,
            "Effect": self.effect,
            "CheckForBottlenecks": self.analyze_bottleneck,
            "PlanParameters": self.plan_params,
            "CheckSuccess": self.check_strategies,
            "Synthesize": self.synthesize_strategies,
            "Observe": self.observe_loop,
            "Assess": self.assess_strategies,
            "Synthesize2": self.synthesize_declarative,
            "Enact": self.enact_strategies,
            "CreateModel": self.create_model,
            "Reconfigure": self.reconfigure,
            "Update-software.Effect": self.apply_update,
        }


def declare_default_event_types(registry) -> None:
    registry.declare(BASE_FAILURE_EVENT)
    registry.declare("OutOfMemoryRtException", BASE_FAILURE_EVENT)
    registry.declare(LOAD_EVENT)


def build_runtime_inputs(source_key: str = "mrubis"):
    """(software, default_ops) pair wiring one fresh harness system."""
    system = AdaptableSystem()
    ops = HarnessOps(system)
    return {source_key: system}, ops.registry()
