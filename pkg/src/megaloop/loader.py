"""Assemble a ready-to-run engine from fixture files."""

from __future__ import annotations

from pathlib import Path

from . import dsl, harness
from .diagnostics import Diagnostic
from .model import EventTypeRegistry, Megamodel
from .runtime import Engine
from .scenario import Script, parse_script


class LoadError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("\n".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


def load_fld_dir(path: str | Path) -> dict[str, Megamodel]:
    """Parse every .fld file in a directory into a megamodel registry."""
    registry: dict[str, Megamodel] = {}
    diags: list[Diagnostic] = []
    for file in sorted(Path(path).glob("*.fld")):
        result = dsl.parse_fld(file.read_text(encoding="utf-8"), str(file))
        if not result.ok:
            diags.extend(result.diagnostics)
            continue
        mm = result.value
        if mm.name in registry:
            diags.append(Diagnostic("error", "E-NAME-DUP",
                                    f"megamodel {mm.name!r} defined twice", path=str(file)))
        registry[mm.name] = mm
    if diags:
        raise LoadError(diags)
    return registry


def build_engine(ld_path: str | Path, fld_dir: str | Path, *,
                 script: Script | str | Path | None = None,
                 clock=None, software=None, default_ops=None,
                 trace_sink=None, period_anchor: str = "end") -> tuple[Engine, Script | None]:
    """Load megamodels, architecture, and scenario into a fresh engine.

    Without explicit `software`/`default_ops` the bundled adaptable-system
    harness provides the implementations.
    """
    if isinstance(script, (str, Path)):
        result = parse_script(Path(script).read_text(encoding="utf-8"), str(script))
        if not result.ok:
            raise LoadError(result.diagnostics)
        script = result.value

    if software is None and default_ops is None:
        software, default_ops = harness.build_runtime_inputs()
    event_types = EventTypeRegistry()
    harness.declare_default_event_types(event_types)
    if script is not None:
        script.declare_events(event_types)

    engine = Engine(clock=clock, software=software, default_ops=default_ops,
                    event_types=event_types, trace_sink=trace_sink,
                    period_anchor=period_anchor)
    engine.registry.update(load_fld_dir(fld_dir))

    ld_file = Path(ld_path)
    arch_result = dsl.parse_ld(ld_file.read_text(encoding="utf-8"), str(ld_file))
    if not arch_result.ok:
        raise LoadError(arch_result.diagnostics)
    engine.load_architecture(arch_result.value)
    return engine, script
