"""Run-record bookkeeping beyond what the condition tests cover."""

from __future__ import annotations

from megaloop.history import ABORT_STATE, ExecutionHistory


def test_exit_counts_skip_aborted_runs():
    hist = ExecutionHistory()
    hist.begin_run(0.0, "Start", 1)
    hist.record_op("A", "ok", 0.0, 0.1)
    hist.end_run(0.2, "Done", 2)
    hist.begin_run(1.0, "Start", 3)
    hist.record_op("A", "ok", 1.0, 1.1)
    hist.record_op("B", "fail", 1.1, 1.2)
    hist.abort_run(1.3, 4)
    assert hist.exit_counts() == {"A": {"ok": 1}}
    assert hist.runs[-1].final_state == ABORT_STATE
    assert hist.runs[-1].aborted


def test_json_roundtrip_preserves_index_answers():
    hist = ExecutionHistory()
    for i in range(4):
        hist.begin_run(float(i), "Start", 2 * i + 1, cause="periodic")
        hist.record_op("A", "ok" if i % 2 else "fail", float(i), i + 0.5)
        if i == 2:
            hist.abort_run(i + 0.6, 2 * i + 2)
        else:
            hist.end_run(i + 0.6, "Done", 2 * i + 2)
    again = ExecutionHistory.from_json(hist.to_json())
    assert again.to_json() == hist.to_json()
    for exit in ("ok", "fail"):
        assert again.executions("A", exit) == hist.executions("A", exit)
        assert again.runs_since("A", exit) == hist.runs_since("A", exit)
    assert again.last_completed_end == hist.last_completed_end


def test_mid_run_visibility():
    hist = ExecutionHistory()
    hist.begin_run(0.0, "Start", 1)
    assert hist.run_count() == 1  # the in-flight run counts
    hist.record_op("A", "ok", 0.0, 0.1)
    assert hist.executions("A", "ok") == 1  # completed ops of the open run count
    hist.end_run(0.2, "Done", 2)
    assert hist.run_count() == 1
