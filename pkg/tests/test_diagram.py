import csv
import json
import math

import numpy as np
import pytest

from skewfork import attractor as at
from skewfork import base_flow as bf
from skewfork import diagram as dg
from skewfork import spectrum as sp
from skewfork.errors import PatternUnresolved, SymbolicDriver

from conftest import CUBIC, autonomous

CFG = dg.ScanConfig(tol=1e-6, grid_points=9, tol_bif=1e-3)


def census(lam, a2=0.0, mu=0.0):
    d = autonomous(a2=a2)
    return dg.count_minimal_sets(CUBIC.with_params(lam=lam, mu=mu), d, at.FiberGrid.uniform(d), CFG)


def runs_of(*pairs):
    return [{"key": k, "first": a, "last": b} for k, a, b in pairs]


class TestCensus:
    def test_three_copies(self):
        c = census(1.0)
        assert c.count == 3 and c.key == "3"
        assert [s.position for s in c.sets] == ["below_zero", "zero", "above_zero"]
        assert [s.value for s in c.sets] == pytest.approx([-1.0, 0.0, 1.0], abs=1e-5)

    def test_three_copy_exponent_signs(self):
        exps = [s.exponent.value for s in census(1.0).sets]
        assert exps == pytest.approx([-2.0, 1.0, -2.0], abs=1e-4)
        assert exps[0] < 0 < exps[1] and exps[2] < 0

    def test_single_copy(self):
        c = census(-1.0)
        assert c.count == 1 and c.key == "1"
        assert c.sets[0].exponent.value == pytest.approx(-1.0)

    def test_one_sided_triple(self):
        c = census(-0.5, a2=2.0)
        assert c.count == 3 and c.key == "3u"
        values = sorted(s.value for s in c.sets)
        assert values == pytest.approx([0.0, 1 - math.sqrt(2) / 2, 1 + math.sqrt(2) / 2], abs=1e-4)
        kappa = next(s for s in c.sets if s.source == "kappa")
        assert kappa.exponent.classification == "repulsive"

    def test_mirrored_triple(self):
        c = census(-0.5, a2=-2.0)
        assert c.key == "3l"

    def test_two_sets_at_transcritical(self):
        # x' = x^2 (1 - x): the negative side drains into zero
        c = census(0.0, a2=1.0)
        assert c.key == "2u"
        assert [s.value for s in c.sets] == pytest.approx([0.0, 1.0], abs=1e-5)


class TestMatchLambda:
    SPEC = sp.SpectrumInterval(0.0, 0.0)

    def test_classical(self):
        runs = runs_of(("1", -1.0, -0.1), ("3", 0.1, 1.0))
        pattern, side, pts, _ = dg.match_lambda(runs, self.SPEC, 1e-3)
        assert (pattern, side) == ("ClassicalPitchfork", "both")
        assert pts[0].value == pytest.approx(0.0) and pts[0].uncertainty == pytest.approx(0.1)

    def test_saddle_node_transcritical(self):
        runs = runs_of(("1", -2.0, -1.01), ("3u", -0.99, -0.01), ("3", 0.01, 1.0))
        pattern, side, pts, _ = dg.match_lambda(runs, self.SPEC, 1e-3)
        assert (pattern, side) == ("SaddleNodeTranscritical", "lower_collides")
        kinds = [p.kind for p in pts]
        assert kinds == ["saddle_node", "transcritical_endpoint_lower", "transcritical_endpoint_upper"]
        assert pts[0].value == pytest.approx(-1.0) and pts[2].value == pytest.approx(0.0)

    def test_snt_with_two_set_stage(self):
        runs = runs_of(("1", -2.0, -1.5), ("3l", -1.4, -0.6), ("2l", -0.4, -0.1), ("3", 0.1, 1.0))
        pattern, side, pts, _ = dg.match_lambda(runs, sp.SpectrumInterval(-0.3, 0.3), 1e-3)
        assert (pattern, side) == ("SaddleNodeTranscritical", "upper_collides")
        assert pts[1].value == pytest.approx(-0.5) and pts[2].value == pytest.approx(0.0)

    def test_generalized(self):
        runs = runs_of(("1", -1.0, -0.45), ("2u", -0.35, 0.35), ("3", 0.45, 1.0))
        pattern, side, pts, _ = dg.match_lambda(runs, sp.SpectrumInterval(-0.4, 0.4), 1e-3)
        assert (pattern, side) == ("GeneralizedPitchfork", "lower_collides")
        assert [p.kind for p in pts] == ["generalized_lower", "transcritical_endpoint_upper"]

    def test_point_spectrum_never_generalized(self):
        runs = runs_of(("1", -1.0, -0.45), ("2u", -0.35, 0.35), ("3", 0.45, 1.0))
        pattern, _, _, notes = dg.match_lambda(runs, self.SPEC, 1e-3)
        assert pattern is None and any("point spectrum" in n for n in notes)

    def test_two_set_window_below_spectrum(self):
        runs = runs_of(("1", -2.0, -1.5), ("2u", -1.4, 0.35), ("3", 0.45, 1.0))
        pattern, _, _, _ = dg.match_lambda(runs, sp.SpectrumInterval(-0.4, 0.4), 1e-3)
        assert pattern is None

    @pytest.mark.parametrize("keys", [["3", "1"], ["1"], ["1", "3u", "3l", "3"], ["1", "2u", "3u", "3"]])
    def test_unmatched(self, keys):
        runs = runs_of(*[(k, float(i), float(i) + 0.5) for i, k in enumerate(keys)])
        assert dg.match_lambda(runs, self.SPEC, 1e-3)[0] is None


class TestMatchMu:
    def test_no_bifurcation(self):
        assert dg.match_mu(runs_of(("3", -1.0, 1.0)))[0] == "NoBifurcation"

    def test_two_saddle_nodes(self):
        pattern, pts, _ = dg.match_mu(runs_of(("3l", -3, -2.1), ("1", -1.9, 1.9), ("3u", 2.1, 3)))
        assert pattern == "TwoSaddleNodes"
        assert [p.value for p in pts] == pytest.approx([-2.0, 2.0])
        assert [p.kind for p in pts] == ["mu_saddle_lower", "mu_saddle_upper"]

    @pytest.mark.parametrize("keys", [["2l", "2u"], ["2l", "1", "2u"]])
    def test_weak_generalized(self, keys):
        runs = runs_of(*[(k, float(i), float(i) + 0.5) for i, k in enumerate(keys)])
        assert dg.match_mu(runs)[0] == "WeakGeneralizedTranscritical"

    def test_unmatched(self):
        assert dg.match_mu(runs_of(("3u", 0, 1), ("3l", 2, 3)))[0] is None

    def test_expected_from_spectrum(self):
        assert dg.expected_mu_pattern(sp.SpectrumInterval(0.5, 0.5)) == "NoBifurcation"
        assert dg.expected_mu_pattern(sp.SpectrumInterval(-1.0, -1.0)) == "TwoSaddleNodes"
        assert dg.expected_mu_pattern(sp.SpectrumInterval(-0.1, 0.1)) == "WeakGeneralizedTranscritical"


@pytest.fixture(scope="module")
def pitchfork():
    return dg.scan_lambda(CUBIC, autonomous(), (-1.0, 1.0), cfg=CFG)


class TestScans:
    def test_pitchfork(self, pitchfork):
        assert pitchfork.pattern == "ClassicalPitchfork"
        (p,) = pitchfork.points_of("pitchfork")
        assert abs(p.value) <= 1e-3 + p.uncertainty

    def test_saddle_node(self):
        r = dg.scan_lambda(CUBIC, autonomous(a2=2.0), (-2.0, 1.0), cfg=CFG)
        assert r.pattern == "SaddleNodeTranscritical" and r.side == "lower_collides"
        (sn,) = r.points_of("saddle_node")
        assert sn.value == pytest.approx(-1.0, abs=2e-3)

    def test_two_saddle_nodes(self):
        d = autonomous()
        r = dg.scan_mu(CUBIC.with_params(lam=-1.0), d, (-3.0, 3.0), cfg=CFG)
        assert r.pattern == "TwoSaddleNodes" and r.expected == "TwoSaddleNodes"
        assert [p.value for p in r.bifurcation_points] == pytest.approx([-2.0, 2.0], abs=3e-3)

    def test_no_bifurcation(self):
        r = dg.scan_mu(CUBIC.with_params(lam=1.0), autonomous(), (-2.0, 2.0), cfg=CFG)
        assert r.pattern == "NoBifurcation" and r.bifurcation_points == []

    def test_unresolved_carries_report(self):
        with pytest.raises(PatternUnresolved) as err:
            dg.scan_lambda(CUBIC, autonomous(), (0.5, 1.0), cfg=CFG)
        assert err.value.report.pattern is None

    def test_non_strict_returns_report(self):
        r = dg.scan_lambda(CUBIC, autonomous(), (0.5, 1.0), cfg=CFG, strict=False)
        assert r.pattern is None and {p.key for p in r.points} == {"3"}

    def test_symbolic_rejected(self):
        d = bf.Driver.from_table(bf.MeasureTable(1, {"a1": (0.0,)}, {"a1": (0.0, 0.0)}))
        with pytest.raises(SymbolicDriver):
            dg.scan_lambda(CUBIC, d, (-1.0, 1.0), cfg=CFG)

    def test_empty_range(self):
        with pytest.raises(ValueError):
            dg.scan_lambda(CUBIC, autonomous(), (1.0, 1.0), cfg=CFG)

    def test_deterministic_json(self, pitchfork):
        again = dg.scan_lambda(CUBIC, autonomous(), (-1.0, 1.0), cfg=CFG)
        assert again.to_json() == pitchfork.to_json()
        data = json.loads(pitchfork.to_json())
        assert data["pattern"] == "ClassicalPitchfork" and data["scan"] == "lambda"

    def test_threads_match_serial(self, pitchfork):
        cfg = dg.ScanConfig(tol=1e-6, grid_points=9, tol_bif=1e-3, jobs=2)
        threaded = dg.scan_lambda(CUBIC, autonomous(), (-1.0, 1.0), cfg=cfg)
        assert threaded.to_json() == pitchfork.to_json()

    def test_csv(self, pitchfork, tmp_path):
        path = tmp_path / "diagram.csv"
        dg.write_diagram_csv(pitchfork, path)
        rows = list(csv.reader(open(path)))
        assert tuple(rows[0]) == dg.CSV_COLUMNS
        pts = pitchfork.points + pitchfork.refinement
        # eight fibers per conclusive point, one placeholder row otherwise
        assert len(rows) - 1 == sum(8 if p.census else 1 for p in pts)
        single = [r for r in rows[1:] if float(r[0]) == -1.0]
        assert all(r[4] == "" for r in single)

    def test_fiber0_csv(self, pitchfork, tmp_path):
        path = tmp_path / "fiber0.csv"
        dg.write_fiber0_csv(pitchfork, path)
        rows = list(csv.reader(open(path)))
        assert rows[0][0] == "lambda"
        params = [float(r[0]) for r in rows[1:]]
        assert params == sorted(params)
        last = rows[-1]
        assert float(last[2]) == pytest.approx(1.0, abs=1e-5)
        assert np.isclose(float(last[1]), -1.0, atol=1e-5)
