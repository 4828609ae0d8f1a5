"""Evaluation statistics: P@1, weighted averages, sign tests, deltas, NSP."""

import math

import pytest
from scipy import stats as scipy_stats

from ctxprobe import evaluation
from ctxprobe.errors import PairingError
from ctxprobe.evaluation import (
    RunRecord,
    delta_analysis,
    nsp_delta_correlation,
    nsp_rate,
    precision_at_1,
    sign_test,
    weighted_average,
)

from oracles import sign_test_by_enumeration, spearman_by_hand


def record(uuid="f1", relation="r1", corpus="Other", strategy="oracle",
           answer="a", argmax="a", lp=-0.1, lp0=None, nsp=None, present=False):
    return RunRecord(
        fact_uuid=uuid, relation=relation, corpus=corpus, strategy=strategy,
        answer=answer, argmax_token=argmax, answer_logprob=lp,
        answer_logprob_nocontext=lp0, nsp_prob=nsp, answer_present=present,
    )


class TestPrecisionAt1:
    def test_two_of_three_correct(self):
        records = [
            record(uuid="f1", argmax="a"),
            record(uuid="f2", argmax="a"),
            record(uuid="f3", argmax="b"),
        ]
        per_relation, per_corpus = precision_at_1(records)
        assert per_relation["r1"] == pytest.approx(66.6666666, abs=1e-4)
        assert per_corpus["Other"] == per_relation["r1"]

    def test_exact_string_match_only(self):
        records = [record(argmax="A")]  # case differs
        per_relation, _ = precision_at_1(records)
        assert per_relation["r1"] == 0.0

    def test_permutation_invariant(self):
        records = [record(uuid=f"f{i}", argmax="a" if i % 3 else "b") for i in range(30)]
        fwd = precision_at_1(records)
        rev = precision_at_1(list(reversed(records)))
        assert fwd == rev


class TestWeightedAverage:
    def test_main_column(self):
        value = weighted_average({"GoogleRE": 10.5, "TREx": 32.3, "SQuAD": 17.4})
        assert value == pytest.approx(30.5, abs=0.05)

    def test_retrieved_column(self):
        value = weighted_average({"GoogleRE": 40.8, "TREx": 43.1, "SQuAD": 34.3})
        assert value == pytest.approx(42.8, abs=0.05)

    def test_oracle_column(self):
        value = weighted_average({"GoogleRE": 78.0, "TREx": 62.6, "SQuAD": 61.7})
        assert value == pytest.approx(63.6, abs=0.05)

    def test_equal_values_identity(self):
        assert weighted_average({"GoogleRE": 7.0, "TREx": 7.0, "SQuAD": 7.0}) == pytest.approx(7.0)

    def test_missing_corpus_listed(self):
        with pytest.raises(ValueError, match="SQuAD"):
            weighted_average({"GoogleRE": 1.0, "TREx": 2.0})


class TestSignTest:
    def test_all_wins_n10(self):
        a = {f"r{i}": 10.0 for i in range(10)}
        b = {f"r{i}": 5.0 for i in range(10)}
        assert sign_test(a, b) == pytest.approx(2 * 0.5**10, abs=1e-12)

    def test_symmetric_split_is_one(self):
        a = {f"r{i}": (10.0 if i < 5 else 0.0) for i in range(10)}
        b = {f"r{i}": (0.0 if i < 5 else 10.0) for i in range(10)}
        assert sign_test(a, b) == 1.0

    def test_forty_four_wins_below_1e5(self):
        a = {f"r{i}": 50.0 for i in range(44)}
        b = {f"r{i}": 10.0 for i in range(44)}
        assert sign_test(a, b) < 1e-5

    def test_ties_dropped(self):
        a = {"r1": 5.0, "r2": 5.0, "r3": 9.0}
        b = {"r1": 5.0, "r2": 5.0, "r3": 1.0}
        # Only r3 is informative: n=1, p = 2 * 0.5 = 1.0.
        assert sign_test(a, b) == 1.0

    def test_all_ties_warns_and_returns_one(self):
        a = {"r1": 5.0}
        assert sign_test(a, dict(a)) == 1.0

    def test_mismatched_keys_raise(self):
        with pytest.raises(ValueError):
            sign_test({"r1": 1.0}, {"r2": 1.0})

    def test_matches_exhaustive_enumeration_small_n(self):
        for wins in range(0, 13):
            for losses in range(0, 13 - wins):
                if wins + losses == 0:
                    continue
                a = {f"w{i}": 2.0 for i in range(wins)}
                a.update({f"l{i}": 1.0 for i in range(losses)})
                b = {f"w{i}": 1.0 for i in range(wins)}
                b.update({f"l{i}": 2.0 for i in range(losses)})
                expected = sign_test_by_enumeration(wins, losses)
                assert sign_test(a, b) == pytest.approx(expected, abs=1e-12), (wins, losses)

    def test_matches_scipy_binomtest(self):
        for wins, losses in [(3, 9), (10, 2), (7, 7), (20, 0), (1, 17)]:
            a = {f"r{i}": (2.0 if i < wins else 1.0) for i in range(wins + losses)}
            b = {f"r{i}": (1.0 if i < wins else 2.0) for i in range(wins + losses)}
            expected = scipy_stats.binomtest(wins, wins + losses, 0.5).pvalue
            assert sign_test(a, b) == pytest.approx(expected, rel=1e-12)


class TestDeltaAnalysis:
    def test_identical_runs_all_zero(self):
        baseline = [record(uuid=f"f{i}", strategy="none") for i in range(10)]
        run = [record(uuid=f"f{i}") for i in range(10)]
        bw = delta_analysis(run, baseline)
        assert bw.better_total == bw.worse_total == 0.0
        assert bw.n_relations_improved == 0

    def test_better_and_worse_cells(self):
        baseline = [
            record(uuid="f1", argmax="x"),   # wrong -> right (present)
            record(uuid="f2", argmax="x"),   # wrong -> right (absent)
            record(uuid="f3", argmax="a"),   # right -> wrong (present)
            record(uuid="f4", argmax="a"),   # stays right
        ]
        run = [
            record(uuid="f1", argmax="a", present=True),
            record(uuid="f2", argmax="a", present=False),
            record(uuid="f3", argmax="x", present=True),
            record(uuid="f4", argmax="a", present=True),
        ]
        bw = delta_analysis(run, baseline)
        assert bw.better_present == pytest.approx(25.0)
        assert bw.better_absent == pytest.approx(25.0)
        assert bw.better_total == pytest.approx(50.0)
        assert bw.worse_present == pytest.approx(25.0)
        assert bw.worse_absent == 0.0
        assert bw.worse_total == pytest.approx(25.0)
        assert bw.better_present + bw.better_absent == pytest.approx(bw.better_total)
        assert bw.worse_present + bw.worse_absent == pytest.approx(bw.worse_total)
        assert bw.n_relations_improved == 1

    def test_unpaired_record_raises_with_uuid(self):
        baseline = [record(uuid="f1")]
        run = [record(uuid="f1"), record(uuid="ghost")]
        with pytest.raises(PairingError, match="ghost"):
            delta_analysis(run, baseline)

    def test_oracle_contexts_with_answers_only_improve(self):
        # All oracle contexts contain the answer and the scorer copies it:
        # nothing can get worse, and every gain comes from answer-present rows.
        baseline = [
            record(uuid=f"f{i}", argmax=("a" if i < 2 else "x")) for i in range(10)
        ]
        run = [record(uuid=f"f{i}", argmax="a", present=True) for i in range(10)]
        bw = delta_analysis(run, baseline)
        assert bw.worse_total == 0.0
        assert bw.better_present == bw.better_total
        assert bw.better_total == pytest.approx(80.0)


class TestNspRate:
    def test_all_ones(self):
        records = [record(uuid=f"f{i}", nsp=1.0) for i in range(4)]
        assert nsp_rate(records) == 100.0

    def test_strict_threshold(self):
        records = [record(uuid="f1", nsp=0.5), record(uuid="f2", nsp=0.51)]
        assert nsp_rate(records) == 50.0

    def test_missing_nsp_raises(self):
        with pytest.raises(ValueError, match="f2"):
            nsp_rate([record(uuid="f1", nsp=0.9), record(uuid="f2", nsp=None)])

    def test_disjoint_adversarial_fixtures_rate_zero(self):
        from ctxprobe.scorer import mock_nsp

        fixtures = [
            ("Gadus was born in [MASK] .", "Merel works in the field of biology ."),
            ("Tivoli is located in [MASK] .", "Parda plays in goalkeeper position ."),
        ]
        rates = [mock_nsp(q, c) for q, c in fixtures]
        assert all(r == 0.0 for r in rates)
        records = [record(uuid=f"f{i}", nsp=r) for i, r in enumerate(rates)]
        assert nsp_rate(records) == 0.0


class TestNspDeltaCorrelation:
    def test_monotone_identity_gives_rho_one(self):
        records = []
        for i in range(10):
            nsp = i / 10.0
            lp0 = math.log(0.2)
            lp = math.log(0.2 + nsp * 0.5)  # |dP| = nsp/2, monotone in nsp
            records.append(record(uuid=f"f{i}", nsp=nsp, lp=lp, lp0=lp0))
        curve = nsp_delta_correlation(records)
        assert curve.spearman_rho == pytest.approx(1.0)
        assert not curve.degenerate

    def test_constant_nsp_is_degenerate(self):
        records = [
            record(uuid=f"f{i}", nsp=0.7, lp=math.log(0.1 * (i + 1)), lp0=math.log(0.05))
            for i in range(5)
        ]
        curve = nsp_delta_correlation(records)
        assert curve.spearman_rho == 0.0
        assert curve.degenerate

    def test_bins_partition_records(self):
        records = [
            record(uuid=f"f{i}", nsp=i / 20.0, lp=math.log(0.3), lp0=math.log(0.2))
            for i in range(21)
        ]
        curve = nsp_delta_correlation(records)
        assert sum(count for _, _, count in curve.bins) == 21
        assert [hi for hi, _, _ in curve.bins] == [pytest.approx((i + 1) / 10) for i in range(10)]

    def test_too_few_records_raise(self):
        with pytest.raises(ValueError):
            nsp_delta_correlation([record(nsp=0.5, lp0=-1.0)])

    def test_mixed_fixture_positive_and_matches_hand_ranks(self):
        # Gate-closed adversarial rows (low NSP, zero delta) vs gate-open
        # oracle rows (high NSP, large delta): rho must be positive.
        records = []
        nsps, deltas = [], []
        for i in range(8):
            nsp = 0.2 + 0.01 * i
            records.append(record(uuid=f"adv{i}", nsp=nsp, lp=math.log(0.02), lp0=math.log(0.02)))
            nsps.append(nsp)
            deltas.append(0.0)
        for i in range(8):
            nsp = 0.6 + 0.01 * i
            lp = math.log(0.9 + 0.002 * i)
            records.append(record(uuid=f"ora{i}", nsp=nsp, lp=lp, lp0=math.log(0.02)))
            nsps.append(nsp)
            deltas.append(abs(math.exp(lp) - 0.02))
        curve = nsp_delta_correlation(records)
        assert curve.spearman_rho > 0.0
        assert curve.spearman_rho == pytest.approx(spearman_by_hand(nsps, deltas), abs=1e-12)


class TestBuildReport:
    def test_summaries_and_sign_tests(self):
        baseline = [
            record(uuid=f"f{i}", relation=f"r{i % 2}", strategy="none", argmax="x")
            for i in range(10)
        ]
        oracle = [
            record(uuid=f"f{i}", relation=f"r{i % 2}", strategy="oracle", argmax="a",
                   nsp=0.9, lp0=-3.0, present=True)
            for i in range(10)
        ]
        report = evaluation.build_report("none", {"none": baseline, "oracle": oracle})
        assert report.runs["oracle"].per_relation_p1 == {"r0": 100.0, "r1": 100.0}
        assert report.runs["none"].per_relation_p1 == {"r0": 0.0, "r1": 0.0}
        assert report.runs["oracle"].better_worse.better_total == 100.0
        assert report.runs["oracle"].nsp_rate_percent == 100.0
        assert "none|oracle" in report.sign_tests
        # JSON round-trips without error.
        as_json = report.to_json()
        assert as_json["runs"]["oracle"]["weighted_average_p1"] is None

    def test_unknown_baseline_raises(self):
        with pytest.raises(ValueError):
            evaluation.build_report("none", {"oracle": [record()]})
