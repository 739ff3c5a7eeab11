import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import rankdata

from spoofcm.errors import ConfigError, FusionError, MetricError, ParameterError, ParseError
from spoofcm.evaluation import (ScoreSet, TdcfParams, TrialRecord, asv_error_rates, class_counts,
                                compute_eer, compute_min_tdcf, default_tdcf_params, det_points,
                                fuse_scores, metric_report, parse_protocol, read_asv_scores,
                                read_scores, select, write_det_csv, write_protocol,
                                write_report, write_scores)
from spoofcm.evaluation.protocol import infer_partition, parse_protocol_lines

from oracles import oracle_eer, oracle_min_tdcf, random_sets, sweep


def keyed(bona, spoof):
    scores = {f"B{i}": s for i, s in enumerate(bona)}
    scores.update({f"S{i}": s for i, s in enumerate(spoof)})
    keys = {u: ("bonafide" if u[0] == "B" else "spoof") for u in scores}
    return ScoreSet(scores, keys)


class TestProtocol:
    def test_example_line(self):
        (r,) = parse_protocol_lines(["LA_0079 LA_T_1000137 - A01 spoof"])
        assert (r.speaker_id, r.utt_id, r.attack_id, r.key, r.label) == \
            ("LA_0079", "LA_T_1000137", "A01", "spoof", 1)
        assert r.partition == "train"

    def test_bonafide_label(self):
        (r,) = parse_protocol_lines(["LA_0001 LA_D_0000001 - - bonafide"])
        assert r.label == 0 and r.partition == "dev"

    def test_three_fields_reports_line(self, tmp_path):
        p = tmp_path / "p.txt"
        p.write_text("LA_1 LA_T_1 - A01 spoof\nLA_2 LA_T_2 spoof\n")
        with pytest.raises(ParseError) as e:
            parse_protocol(p)
        assert e.value.line_no == 2
        assert str(p) in str(e.value)

    def test_bad_key(self):
        with pytest.raises(ParseError):
            parse_protocol_lines(["A U - A01 fake"])

    def test_duplicate(self):
        with pytest.raises(ParseError):
            parse_protocol_lines(["A U - A01 spoof", "A U - A02 spoof"])

    def test_partition_inference(self):
        assert infer_partition("LA_E_123") == "eval"
        assert infer_partition("other") == "train"

    def test_round_trip_and_counts(self, tmp_path):
        recs = [TrialRecord("S1", "X_T_1", "-", "bonafide"), TrialRecord("S1", "X_E_2", "A07", "spoof", "eval")]
        write_protocol(tmp_path / "p.txt", recs)
        back = parse_protocol(tmp_path / "p.txt")
        assert back == recs
        assert class_counts(back) == {"bonafide": 1, "spoof": 1}
        assert select(back, "eval") == recs[1:]


class TestEerExamples:
    def test_perfect_separation(self):
        assert compute_eer([0.9, 0.8], [0.1, 0.2]).eer == 0.0

    def test_indistinguishable(self):
        assert compute_eer([0.5], [0.5]).eer == 0.5

    def test_listed_tied_case_is_half(self):
        # the sweep has FAR == FRR == 0.5 exactly at t = 0.7; see the decisions ledger
        res = compute_eer([0.8, 0.2], [0.7, 0.1])
        assert res.eer == 0.5
        assert res.threshold == 0.7
        assert oracle_eer([0.8, 0.2], [0.7, 0.1]) == 0.5

    def test_interpolated_crossing(self):
        # t=0.3: far 1/2, frr 0; t=0.6: far 0, frr 1/2 -> cross at 1/4
        res = compute_eer([0.6, 0.9], [0.3, 0.5])
        np.testing.assert_allclose(res.eer, oracle_eer([0.6, 0.9], [0.3, 0.5]), atol=1e-15)

    def test_keyed_scoreset(self):
        assert compute_eer(keyed([0.9, 0.8], [0.1, 0.2])).eer == 0.0

    def test_empty_class(self):
        with pytest.raises(MetricError):
            compute_eer([0.1], [])

    def test_nonfinite(self):
        with pytest.raises(MetricError):
            compute_eer([np.nan], [0.1])


class TestMetricOracles:
    def test_eer_matches_sweep_on_1000_sets(self):
        rng = np.random.default_rng(42)
        worst = max(abs(compute_eer(b, s).eer - oracle_eer(b.tolist(), s.tolist()))
                    for b, s in random_sets(rng, 1000))
        assert worst <= 1e-9

    def test_min_tdcf_matches_sweep(self):
        rng = np.random.default_rng(7)
        p = default_tdcf_params()
        for b, s in random_sets(rng, 300):
            np.testing.assert_allclose(compute_min_tdcf(b, s, p).min_tdcf,
                                       oracle_min_tdcf(b.tolist(), s.tolist(), p), atol=1e-12, rtol=0)

    def test_min_tdcf_four_trials_enumerated(self):
        p = default_tdcf_params()
        c1, c2 = 0.9405, 0.05 * 10
        # thresholds 0.1, 0.3, 0.6, 0.9, inf -> (frr, far)
        grid = [(0, 1), (0, 0.5), (0.5, 0.5), (0.5, 0), (1, 0)]
        expected = min((c1 * r + c2 * a) / min(c1, c2) for r, a in grid)
        res = compute_min_tdcf([0.3, 0.9], [0.1, 0.6], p)
        np.testing.assert_allclose(res.min_tdcf, expected, atol=1e-12, rtol=0)
        assert res.threshold == 0.3

    @pytest.mark.parametrize("version", ["2019", "2021"])
    def test_tdcf_in_unit_interval(self, version):
        rng = np.random.default_rng(3)
        p = TdcfParams(P_miss_asv=0.05, P_fa_asv=0.02, P_miss_spoof_asv=0.3, version=version)
        for b, s in random_sets(rng, 200):
            v = compute_min_tdcf(b, s, p).min_tdcf
            assert 0.0 <= v <= 1.0 + 1e-15

    @pytest.mark.parametrize("version", ["2019", "2021"])
    def test_zero_iff_separable(self, version):
        p = TdcfParams(P_miss_asv=0.05, P_fa_asv=0.02, version=version)
        if version == "2019":
            assert compute_min_tdcf([0.9, 0.8], [0.1, 0.2], p).min_tdcf == 0.0
        else:
            # the ASV-only term keeps the revised cost above zero
            assert compute_min_tdcf([0.9, 0.8], [0.1, 0.2], p).min_tdcf > 0.0
        assert compute_min_tdcf([0.9, 0.15], [0.1, 0.2], p).min_tdcf > 0.0

    def test_identical_scores_cost_one(self):
        assert compute_min_tdcf([0.5] * 3, [0.5] * 4).min_tdcf == pytest.approx(1.0, abs=1e-15)

    def test_degenerate_constants(self):
        p = TdcfParams(P_miss_spoof_asv=1.0)
        with pytest.raises(ParameterError):
            compute_min_tdcf([0.9], [0.1], p)

    def test_params_validation_and_json(self, tmp_path):
        with pytest.raises(ConfigError, match="tdcf"):
            TdcfParams(pi_tar=0.5)
        with pytest.raises(ConfigError, match="tdcf.P_fa_asv"):
            TdcfParams(P_fa_asv=1.5)
        p = TdcfParams(version="2021", P_miss_asv=0.1)
        (tmp_path / "t.json").write_text(json.dumps(p.to_dict()))
        assert TdcfParams.from_json(tmp_path / "t.json") == p

    def test_default_is_ideal_asv_2019(self):
        p = default_tdcf_params()
        assert p.version == "2019"
        assert (p.P_miss_asv, p.P_fa_asv, p.P_miss_spoof_asv) == (0.0, 0.0, 0.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=40),
       st.lists(st.floats(-5, 5), min_size=1, max_size=40))
def test_eer_invariant_under_increasing_transform(bona, spoof):
    b, s = np.array(bona), np.array(spoof)
    base = compute_eer(b, s).eer
    for f in (np.exp, lambda x: 3 * x - 7, lambda x: np.arctan(x) ** 3):
        # floating point may merge nearly equal scores; only rank-preserving images count
        if not np.array_equal(rankdata(np.concatenate([b, s])),
                              rankdata(np.concatenate([f(b), f(s)]))):
            continue
        assert compute_eer(f(b), f(s)).eer == pytest.approx(base, abs=1e-12)


class TestDet:
    def test_monotone(self):
        rng = np.random.default_rng(42)
        pts = det_points(rng.normal(1, 1, 300), rng.normal(0, 1, 200))
        pts.sort(key=lambda p: (p.far, -p.frr))
        assert all(a.frr >= b.frr for a, b in zip(pts, pts[1:]))

    def test_endpoints(self):
        pts = det_points([0.9, 0.4], [0.1, 0.6])
        assert (pts[0].far, pts[0].frr) == (1.0, 0.0)
        assert (pts[-1].far, pts[-1].frr) == (0.0, 1.0)
        assert pts[-1].threshold == math.inf

    def test_perfect_classifier_hits_origin(self):
        assert any(p.far == 0 and p.frr == 0 for p in det_points([0.9, 0.8], [0.1, 0.2]))

    def test_reversed_scores(self):
        bona, spoof = [0.1, 0.2, 0.3], [0.7, 0.8, 0.9]
        assert compute_eer(bona, spoof).eer > 0.5
        pts = det_points(bona, spoof)
        assert any(p.far == 1.0 and p.frr == 1.0 for p in pts) or \
            max(p.far + p.frr for p in pts) >= 5 / 3

    def test_enumerated_twenty_trials(self):
        rng = np.random.default_rng(5)
        bona, spoof = rng.integers(0, 6, 10) / 5.0, rng.integers(0, 6, 10) / 5.0
        expected = sweep(bona.tolist(), spoof.tolist())
        got = [(p.threshold, p.far, p.frr) for p in det_points(bona, spoof)]
        assert got == expected

    def test_csv(self, tmp_path):
        n = write_det_csv(tmp_path / "d.csv", [0.9, 0.4], [0.1, 0.6])
        rows = list(csv.reader(open(tmp_path / "d.csv")))
        assert rows[0] == ["threshold", "far", "frr", "probit_far", "probit_frr"]
        assert len(rows) == n + 1 == 6
        assert np.isfinite(float(rows[1][3]))  # probit clipped at FAR = 1


class TestFusion:
    def test_average(self):
        fused = fuse_scores([ScoreSet({"u": 0.2}), ScoreSet({"u": 0.4})])
        np.testing.assert_allclose(fused.scores["u"], 0.3, rtol=1e-15)

    def test_idempotent(self):
        rng = np.random.default_rng(42)
        s = keyed(rng.normal(1, 1, 50), rng.normal(0, 1, 70))
        fused = fuse_scores([s, s])
        assert fused.scores == s.scores
        assert metric_report(*fused.split(s_records(s))) == metric_report(*s.split())

    def test_disjoint_ids_listed(self):
        with pytest.raises(FusionError) as e:
            fuse_scores([ScoreSet({"a": 1.0, "b": 0.0}), ScoreSet({"a": 1.0, "c": 0.0})])
        assert "b" in str(e.value) and "c" in str(e.value)

    def test_needs_two(self):
        with pytest.raises(FusionError):
            fuse_scores([ScoreSet({"a": 1.0})])


def s_records(s):
    return [TrialRecord("S", u, "-", k) for u, k in s.keys.items()]


class TestScoreFiles:
    def test_round_trip_exact(self, tmp_path):
        s = ScoreSet({"a": 0.1 + 0.2, "b": -1e-300, "c": 12345.678901234567})
        write_scores(tmp_path / "s.txt", s)
        assert read_scores(tmp_path / "s.txt").scores == s.scores

    @pytest.mark.parametrize("text", ["a 1 2\n", "a x\n", "a 1\na 2\n"])
    def test_parse_errors(self, tmp_path, text):
        (tmp_path / "s.txt").write_text(text)
        with pytest.raises(ParseError):
            read_scores(tmp_path / "s.txt")

    def test_missing_key(self):
        with pytest.raises(MetricError):
            ScoreSet({"a": 1.0}, {}).split()

    def test_report(self, tmp_path):
        rep = metric_report([0.9, 0.8], [0.1, 0.2])
        assert set(rep) == {"eer", "eer_threshold", "min_tdcf", "tdcf_threshold",
                            "n_bonafide", "n_spoof"}
        write_report(tmp_path / "r.json", rep)
        assert json.loads((tmp_path / "r.json").read_text()) == rep


class TestAsvScores:
    def test_rates_at_asv_eer_threshold(self, tmp_path):
        lines = ["LA_1 u1 bonafide target 3.0", "LA_1 u2 bonafide target 2.0",
                 "LA_1 u3 bonafide nontarget -2.0", "LA_1 u4 bonafide nontarget -3.0",
                 "LA_1 u5 A01 spoof 2.5", "LA_1 u6 A02 spoof -1.0"]
        (tmp_path / "asv.txt").write_text("\n".join(lines) + "\n")
        tar, non, spf = read_asv_scores(tmp_path / "asv.txt")
        assert tar.tolist() == [3.0, 2.0] and spf.tolist() == [2.5, -1.0]
        rates = asv_error_rates(tar, non, spf)
        assert rates == {"P_miss_asv": 0.0, "P_fa_asv": 0.0, "P_miss_spoof_asv": 0.5}
        p = default_tdcf_params().with_asv_rates(rates)
        assert p.P_miss_spoof_asv == 0.5

    def test_bad_key(self, tmp_path):
        (tmp_path / "asv.txt").write_text("u1 impostor 1.0\n")
        with pytest.raises(ParseError):
            read_asv_scores(tmp_path / "asv.txt")
