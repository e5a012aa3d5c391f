import itertools

import numpy as np
import pytest

from hopfuse.backends import MockRRBackend
from hopfuse.combine import (
    DEFAULT_THRESHOLDS,
    EITHER_OR_BOTH,
    MAX_SCORE,
    NAIVE,
    PROV_BOTH,
    PROV_ITERATOR_ONLY,
    PROV_RATIONALE_ONLY,
    RATIONALE,
    RATIONALE_DEFAULT,
    ITERATOR,
    CombinationStrategy,
    RRScoredComponent,
    batch_combine,
    combine,
    default_strategy_grid,
)
from hopfuse.errors import ContextError

RATIONALE_TEXT = "Because frogs are amphibians they can breathe through their skin."
ITERATOR_TEXT = "Frog: Frogs are amphibians of the order Anura. Skin: Amphibian skin exchanges gases."


def components(r_score: float, i_score: float):
    return (RRScoredComponent(RATIONALE, RATIONALE_TEXT, r_score),
            RRScoredComponent(ITERATOR, ITERATOR_TEXT, i_score))


def decision_oracle(variant: str, threshold: float, r: float, i: float) -> str:
    """Independent statement of the strategy decision rules."""
    if variant == NAIVE:
        return PROV_BOTH
    if variant == MAX_SCORE:
        return PROV_RATIONALE_ONLY if r >= i else PROV_ITERATOR_ONLY
    if variant == RATIONALE_DEFAULT:
        return PROV_ITERATOR_ONLY if i > threshold else PROV_RATIONALE_ONLY
    r_in, i_in = r > threshold, i > threshold
    if r_in and i_in:
        return PROV_BOTH
    if r_in:
        return PROV_RATIONALE_ONLY
    if i_in:
        return PROV_ITERATOR_ONLY
    return PROV_BOTH


class TestCombineRules:
    def test_naive_concatenation_format(self):
        out = combine(*components(0.1, 0.2), CombinationStrategy.naive())
        assert out.text == f"Further Explanation: {RATIONALE_TEXT} {ITERATOR_TEXT}"
        assert out.provenance == PROV_BOTH

    def test_either_or_both_high_threshold_rationale_only(self):
        out = combine(*components(0.95, 0.20), CombinationStrategy.either_or_both(0.9))
        assert out.provenance == PROV_RATIONALE_ONLY
        assert out.text == RATIONALE_TEXT

    def test_either_or_both_fallback_is_naive(self):
        out = combine(*components(0.50, 0.50), CombinationStrategy.either_or_both(0.9))
        naive = combine(*components(0.50, 0.50), CombinationStrategy.naive())
        assert out.provenance == PROV_BOTH
        assert out.text == naive.text

    def test_max_score_picks_higher(self):
        out = combine(*components(0.70, 0.60), CombinationStrategy.max_score())
        assert out.provenance == PROV_RATIONALE_ONLY
        out = combine(*components(0.10, 0.60), CombinationStrategy.max_score())
        assert out.provenance == PROV_ITERATOR_ONLY

    def test_max_score_tie_goes_to_rationale(self):
        out = combine(*components(0.5, 0.5), CombinationStrategy.max_score())
        assert out.provenance == PROV_RATIONALE_ONLY

    def test_rationale_default_threshold_strict(self):
        strat = CombinationStrategy.rationale_default(0.5)
        assert combine(*components(0.0, 0.5), strat).provenance == PROV_RATIONALE_ONLY
        assert combine(*components(0.0, 0.51), strat).provenance == PROV_ITERATOR_ONLY

    def test_out_of_range_score_rejected(self):
        with pytest.raises(ValueError):
            RRScoredComponent(RATIONALE, "text", 1.5)

    def test_component_order_enforced(self):
        r, i = components(0.5, 0.5)
        with pytest.raises(ValueError):
            combine(i, r, CombinationStrategy.naive())

    def test_truth_table_against_oracle(self):
        lattice = [0.0, 0.0005, 0.1, 0.5, 0.9, 1.0]
        strategies = [(NAIVE, None), (MAX_SCORE, None)] + [
            (v, t) for v in (RATIONALE_DEFAULT, EITHER_OR_BOTH) for t in DEFAULT_THRESHOLDS
        ]
        for (variant, threshold), (r, i) in itertools.product(
            strategies, itertools.product(lattice, repeat=2)
        ):
            strat = CombinationStrategy(variant, threshold)
            got = combine(*components(r, i), strat).provenance
            want = decision_oracle(variant, threshold, r, i)
            assert got == want, (variant, threshold, r, i)


class TestBudgetAndTruncation:
    def test_truncates_iterator_tail_only(self):
        rationale = RRScoredComponent(RATIONALE, "Short rationale sentence here.", 0.5)
        long_iter = RRScoredComponent(ITERATOR, " ".join(f"tok{i}" for i in range(600)), 0.5)
        out = combine(rationale, long_iter, CombinationStrategy.naive(), budget=50)
        assert out.truncated
        assert out.text.startswith("Further Explanation: Short rationale sentence here.")
        assert len(out.text.split()) <= 50
        assert "tok0" in out.text and "tok599" not in out.text

    def test_iterator_only_truncated(self):
        rationale = RRScoredComponent(RATIONALE, "ignored", 0.0)
        long_iter = RRScoredComponent(ITERATOR, " ".join(f"tok{i}" for i in range(100)), 1.0)
        out = combine(rationale, long_iter, CombinationStrategy.max_score(), budget=10)
        assert out.truncated and out.provenance == PROV_ITERATOR_ONLY
        assert out.text == " ".join(f"tok{i}" for i in range(10))

    def test_rationale_never_truncated_error_instead(self):
        rationale = RRScoredComponent(RATIONALE, " ".join(f"r{i}" for i in range(100)), 1.0)
        iterator = RRScoredComponent(ITERATOR, "iter text", 0.0)
        with pytest.raises(ContextError):
            combine(rationale, iterator, CombinationStrategy.naive(), budget=20)

    def test_budget_respected_across_strategies(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            r_len, i_len = int(rng.integers(1, 40)), int(rng.integers(1, 200))
            rationale = RRScoredComponent(RATIONALE, " ".join(["r"] * r_len), float(rng.random()))
            iterator = RRScoredComponent(ITERATOR, " ".join(["i"] * i_len), float(rng.random()))
            for strat in default_strategy_grid():
                out = combine(rationale, iterator, strat, budget=64)
                assert len(out.text.split()) <= 64
                if out.provenance != PROV_ITERATOR_ONLY:
                    assert " ".join(["r"] * r_len) in out.text  # rationale intact


class TestEquivalences:
    def test_either_or_both_zero_equals_naive_for_positive_scores(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            r = float(rng.uniform(1e-6, 1.0))
            i = float(rng.uniform(1e-6, 1.0))
            naive = combine(*components(r, i), CombinationStrategy.naive())
            eob = combine(*components(r, i), CombinationStrategy.either_or_both(0.0))
            assert naive.text == eob.text

    def test_max_score_never_both(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            out = combine(*components(float(rng.random()), float(rng.random())),
                          CombinationStrategy.max_score())
            assert out.provenance in (PROV_RATIONALE_ONLY, PROV_ITERATOR_ONLY)


class TestStrategyGrid:
    def test_default_grid_is_eighteen(self):
        grid = default_strategy_grid()
        assert len(grid) == 18
        labels = [s.label for s in grid]
        assert len(set(labels)) == 18
        assert "naive" in labels and "max_score" in labels
        assert "either_or_both_0.0005" in labels and "rationale_default_0.9" in labels

    def test_thresholds_span_paper_range(self):
        assert DEFAULT_THRESHOLDS[0] == 0.0005
        assert DEFAULT_THRESHOLDS[-1] == 0.9
        assert len(DEFAULT_THRESHOLDS) == 8

    def test_threshold_required(self):
        with pytest.raises(ValueError):
            CombinationStrategy(EITHER_OR_BOTH)


class TestBatchCombine:
    def samples(self, n=10):
        return [
            {
                "id": f"s{i}",
                "question": f"question {i}?",
                "rationale": f"rationale text {i} explains things.",
                "context": f"Title: retrieved context {i} body.",
            }
            for i in range(n)
        ]

    def test_records_and_summary(self):
        records, summary = batch_combine(self.samples(), CombinationStrategy.naive(),
                                         MockRRBackend(seed=0))
        assert len(records) == 10
        assert summary["counts"][PROV_BOTH] == 10
        assert summary["percent"][PROV_BOTH] == 100.0

    def test_saturated_iterator_scores(self):
        class AlwaysOne:
            def score(self, question, context):
                return 1.0

        records, summary = batch_combine(self.samples(),
                                         CombinationStrategy.rationale_default(0.9),
                                         AlwaysOne())
        assert summary["counts"][PROV_ITERATOR_ONLY] == 10

    def test_per_sample_isolation(self):
        bad = self.samples(3)
        del bad[1]["rationale"]
        records, summary = batch_combine(bad, CombinationStrategy.naive(), MockRRBackend(0))
        assert "error" in records[1]
        assert summary["failures"] == 1
        assert summary["total"] == 2

    def test_deterministic(self):
        a = batch_combine(self.samples(), CombinationStrategy.either_or_both(0.5), MockRRBackend(3))
        b = batch_combine(self.samples(), CombinationStrategy.either_or_both(0.5), MockRRBackend(3))
        assert a == b
