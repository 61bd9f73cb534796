"""Parser and serializer: fixture shapes, round-trips, diagnostics."""

from __future__ import annotations

import random

import pytest

from megaloop import dsl
from megaloop.model import check_megamodel

from conftest import FLD_DIR, LD_DIR, random_megamodel


class TestParseFld:
    def test_self_repair_fixture_shape(self):
        text = (FLD_DIR / "self-repair.fld").read_text()
        mm = dsl.parse_fld(text, "self-repair.fld").unwrap()
        assert mm.name == "Self-repair"
        assert [op.name for op in mm.operations] == \
            ["Update", "CheckForFailures", "DeepCheck", "Repair", "Effect"]
        assert len(mm.operations) == 5
        assert len(mm.slots) == 4
        assert len(mm.decisions) == 1
        assert {s.name for s in mm.initial_states()} == {"Monitor", "Analyze"}
        assert {s.name for s in mm.final_states()} == {"Analyzed", "Executed"}
        assert mm.operation("CheckForFailures").display == "Check for failures"

    def test_empty_megamodel_rejected(self):
        result = dsl.parse_fld('megamodel "Empty" {}')
        assert not result.ok
        assert {d.code for d in result.diagnostics} >= {"E-STATE-INITIAL", "E-STATE-FINAL"}

    def test_syntax_error_has_span_inside_text(self):
        text = 'megamodel "X" {\n  initial Start\n  ???\n}'
        result = dsl.parse_fld(text, "x.fld")
        assert not result.ok
        diag = result.diagnostics[0]
        assert diag.span is not None and diag.span.line == 3
        assert 1 <= diag.span.column <= len(text.splitlines()[2]) + 1

    def test_never_a_partial_model(self):
        result = dsl.parse_fld('megamodel "X" { initial Start')
        assert result.value is None and result.diagnostics

    def test_parse_is_deterministic(self):
        text = (FLD_DIR / "self-optimization.fld").read_text()
        assert dsl.parse_fld(text).unwrap() == dsl.parse_fld(text).unwrap()


class TestParseLd:
    def test_self_repair_ld_fixture_shape(self):
        text = (LD_DIR / "self-repair.ld").read_text()
        arch = dsl.parse_ld(text, "self-repair.ld").unwrap()
        assert len(arch.layers) == 2
        kinds = {m.instance_name: m.kind for m in arch.modules()}
        assert kinds == {"mRUBiS": "software", "selfRepair": "megamodel",
                         "selfRepairA": "megamodel"}
        assert len(arch.sense_edges) == 1
        assert arch.sense_edges[0].trigger is not None
        assert len(arch.effect_edges) == 1
        assert [(u.source, u.op, u.target) for u in arch.use_edges] == \
            [("selfRepair", "Analyze", "selfRepairA")]

    def test_bad_effect_mode(self):
        text = 'architecture "X" { layer 0 "l" { software s : "k" } effect s -> s [x] }'
        result = dsl.parse_ld(text)
        assert not result.ok

    def test_trigger_parse_error_surfaces(self):
        text = ('architecture "X" { layer 0 "l" { software s : "k" }\n'
                'layer 1 "m" { module a : "B" }\n'
                'sense a <- s [r] trigger "; ; Monitor;" }')
        result = dsl.parse_ld(text, "x.ld")
        assert not result.ok
        assert result.diagnostics[0].code == "E-TRIG-EMPTY"


class TestRoundTrip:
    @pytest.mark.parametrize("path", sorted(FLD_DIR.glob("*.fld")),
                             ids=lambda p: p.name)
    def test_fld_corpus(self, path):
        first = dsl.parse_fld(path.read_text(), path.name).unwrap()
        text1 = dsl.serialize_fld(first)
        second = dsl.parse_fld(text1, "roundtrip").unwrap()
        assert second == first
        assert dsl.serialize_fld(second) == text1  # canonical fixpoint

    @pytest.mark.parametrize("path", sorted(LD_DIR.glob("*.ld")),
                             ids=lambda p: p.name)
    def test_ld_corpus(self, path):
        first = dsl.parse_ld(path.read_text(), path.name).unwrap()
        text1 = dsl.serialize_ld(first)
        second = dsl.parse_ld(text1, "roundtrip").unwrap()
        assert second == first
        assert dsl.serialize_ld(second) == text1

    def test_canonical_category_order(self):
        text = (FLD_DIR / "self-repair.fld").read_text()
        out = dsl.serialize_fld(dsl.parse_fld(text).unwrap()).splitlines()
        def first_index(prefix):
            return next(i for i, line in enumerate(out) if line.strip().startswith(prefix))
        assert first_index("model ") < first_index("initial ")
        assert first_index("initial ") < first_index("operation ")
        assert first_index("operation ") < first_index("flow ")

    def test_generated_random_megamodels(self):
        rng = random.Random(1405)
        for _ in range(60):
            mm = random_megamodel(rng)
            assert check_megamodel(mm) == []
            text = dsl.serialize_fld(mm)
            again = dsl.parse_fld(text, "gen").unwrap()
            assert again == mm
            assert dsl.serialize_fld(again) == text
