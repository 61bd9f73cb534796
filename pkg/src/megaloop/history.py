"""Per-instance execution history: run records and indexed condition queries.

The history is append-only.  An incremental index keeps every condition
atom O(1); `recount.BruteForceView` in the test suite recomputes the same
quantities by full scans and must always agree.

Aborted runs keep their run index and record but their operation
executions are rolled out of the index so conditions never count a failed
run as a success.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

ABORT_STATE = "⊥(error)"     # synthetic final state of an aborted run
REMOVED_STATE = "⊥(removed)"  # synthetic final state of a removed module


@dataclass(slots=True)
class OpExecution:
    op: str
    exit: str
    start: float
    end: float


@dataclass
class RunRecord:
    index: int
    start: float
    initial_state: str
    cause: str | None = None
    end: float | None = None
    final_state: str | None = None
    destructed: bool = False
    op_executions: list[OpExecution] = field(default_factory=list)
    start_seq: int = 0
    end_seq: int = 0

    @property
    def aborted(self) -> bool:
        return self.final_state == ABORT_STATE


class ExecutionHistory:
    """Ordered run records plus an index answering condition atoms."""

    def __init__(self) -> None:
        self.runs: list[RunRecord] = []
        self.current: RunRecord | None = None
        self.last_completed_end: float | None = None
        self.last_completed_start: float | None = None
        # keys are (op, exit) and (op, None) for the any-exit aggregates
        self._counts: dict[tuple[str, str | None], int] = {}
        self._last_run_idx: dict[tuple[str, str | None], int] = {}
        self._last_end: dict[tuple[str, str | None], float] = {}

    # --- lifecycle -----------------------------------------------------------

    def begin_run(self, now: float, initial_state: str, seq: int,
                  cause: str | None = None) -> RunRecord:
        if self.current is not None:
            raise RuntimeError("begin_run while a run is open")
        run = RunRecord(index=len(self.runs), start=now, initial_state=initial_state,
                        cause=cause, start_seq=seq)
        self.runs.append(run)
        self.current = run
        return run

    def record_op(self, op: str, exit: str, start: float, end: float) -> None:
        run = self.current
        run.op_executions.append(OpExecution(op, exit, start, end))
        counts = self._counts
        for key in ((op, exit), (op, None)):
            counts[key] = counts.get(key, 0) + 1
            self._last_run_idx[key] = run.index
            self._last_end[key] = end

    def end_run(self, now: float, final_state: str, seq: int,
                destructed: bool = False) -> RunRecord:
        run = self.current
        assert run is not None, "end_run outside a run"
        run.end = now
        run.final_state = final_state
        run.destructed = destructed
        run.end_seq = seq
        self.current = None
        self.last_completed_end = now
        self.last_completed_start = run.start
        return run

    def abort_run(self, now: float, seq: int) -> RunRecord:
        """Close the open run as aborted and drop its matches from the index."""
        run = self.end_run(now, ABORT_STATE, seq)
        self._rebuild_index()
        return run

    def _rebuild_index(self) -> None:
        # aborts are rare; rescanning beats undo bookkeeping on the hot path
        self._counts = {}
        self._last_run_idx = {}
        self._last_end = {}
        for run in self.runs:
            if run.aborted:
                continue
            for ex in run.op_executions:
                for key in ((ex.op, ex.exit), (ex.op, None)):
                    self._counts[key] = self._counts.get(key, 0) + 1
                    self._last_run_idx[key] = run.index
                    self._last_end[key] = ex.end

    # --- condition-atom queries (HistoryView) ----------------------------------

    def run_count(self) -> int:
        return len(self.runs)

    def executions(self, op: str, exit: str | None = None) -> int:
        return self._counts.get((op, exit), 0)

    def runs_since(self, op: str, exit: str) -> float:
        last = self._last_run_idx.get((op, exit))
        if last is None:
            return math.inf
        return float(self.runs[-1].index - last)

    def seconds_since(self, op: str, exit: str | None, now: float) -> float:
        last = self._last_end.get((op, exit))
        if last is None:
            return math.inf
        return now - last

    # --- summaries -------------------------------------------------------------

    def exit_counts(self) -> dict[str, dict[str, int]]:
        """Per-operation exit counters recomputed from the raw records."""
        out: dict[str, dict[str, int]] = {}
        for run in self.runs:
            if run.aborted:
                continue
            for ex in run.op_executions:
                out.setdefault(ex.op, {}).setdefault(ex.exit, 0)
                out[ex.op][ex.exit] += 1
        return out

    def to_json(self) -> list[dict]:
        return [
            {
                "index": r.index,
                "start": r.start,
                "end": r.end,
                "initialState": r.initial_state,
                "finalState": r.final_state,
                "destructed": r.destructed,
                "cause": r.cause,
                "startSeq": r.start_seq,
                "endSeq": r.end_seq,
                "ops": [[e.op, e.exit, e.start, e.end] for e in r.op_executions],
            }
            for r in self.runs
        ]

    @classmethod
    def from_json(cls, data: list[dict]) -> "ExecutionHistory":
        hist = cls()
        for entry in data:
            run = hist.begin_run(entry["start"], entry["initialState"],
                                 entry.get("startSeq", 0), entry.get("cause"))
            assert run.index == entry["index"], "non-contiguous run records"
            for op, exit, start, end in entry["ops"]:
                hist.record_op(op, exit, start, end)
            if entry["finalState"] == ABORT_STATE:
                hist.abort_run(entry["end"], entry.get("endSeq", 0))
            else:
                hist.end_run(entry["end"], entry["finalState"],
                             entry.get("endSeq", 0), entry.get("destructed", False))
        return hist
