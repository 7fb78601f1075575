import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evit.efficacy import MlpModel, n_parameters
from evit.errors import ConfigError, InvalidInputError
from evit.transfer import TransferStrategy
from evit.valuation import (
    EVIT_CURVE_HEADER,
    UtilityTable,
    ValuationConfig,
    evit,
    evit_curve,
    evit_curve_to_csv,
    evit_from_alpha,
    expected_utility,
    null_baseline_quality,
    null_evit,
    optimize_strategy,
    recommendation_report,
)

TABLE = UtilityTable()
CFG = ValuationConfig()


def baseline_oracle(proportions):
    """Enumerate every (true, predicted) pair of a uniform random guesser."""
    c = len(proportions)
    tr = fp = fn = fd = Fraction(0)
    for true, p in enumerate(proportions):
        for pred in range(c):
            mass = p * Fraction(1, c)
            if true == pred:
                tr += mass
            elif true == 0:
                fp += mass
            elif pred == 0:
                fn += mass
            else:
                fd += mass
    return tr, fp, fn, fd


def constant_model(alpha):
    theta = np.zeros(n_parameters())
    theta[-4:] = np.log(np.expm1(np.asarray(alpha, dtype=float)))
    return MlpModel.from_vector(theta)


def rising_model():
    """Concentration on TR grows with similarity; the error components stay fixed."""
    theta = np.zeros(n_parameters())
    model = MlpModel.from_vector(theta)
    w = [np.array(a) for a in model.weights]
    b = [np.array(a) for a in model.biases]
    w[0][0, 0] = 4.0
    w[1][0, 0] = 1.0
    w[2][0, 0] = 5.0
    b[2][:] = [0.0, 0.5, 0.5, 0.5]
    return MlpModel(w, b)


class TestBaseline:
    def test_uniform_four_classes(self):
        assert tuple(null_baseline_quality(4)) == (0.25, 0.1875, 0.1875, 0.375)

    def test_expected_utility(self):
        assert expected_utility(null_baseline_quality(4), TABLE, 200) == -2375.0

    @pytest.mark.parametrize(
        "c, proportions",
        [
            (4, None),
            (2, None),
            (3, None),
            (4, (1, 0, 0, 0)),
            (4, (0.4, 0.2, 0.3, 0.1)),
            (5, (0.2, 0.2, 0.2, 0.2, 0.2)),
        ],
    )
    def test_against_enumeration(self, c, proportions):
        p = [Fraction(1, c)] * c if proportions is None else [Fraction(str(v)) for v in proportions]
        expected = [float(v) for v in baseline_oracle(p)]
        np.testing.assert_allclose(null_baseline_quality(c, proportions), expected, rtol=1e-15, atol=1e-16)

    def test_examples(self):
        assert tuple(null_baseline_quality(4, (1, 0, 0, 0))) == (0.25, 0.75, 0.0, 0.0)
        assert tuple(null_baseline_quality(2)) == (0.5, 0.25, 0.25, 0.0)

    def test_invalid_proportions(self):
        with pytest.raises(InvalidInputError):
            null_baseline_quality(4, (0.5, 0.5, 0.5, -0.5))
        with pytest.raises(InvalidInputError):
            null_baseline_quality(4, (0.5, 0.5))
        with pytest.raises(InvalidInputError):
            null_baseline_quality(1)


class TestExpectedUtility:
    def test_perfect(self):
        assert expected_utility((1, 0, 0, 0), TABLE, 200) == 1000.0

    def test_empty_target(self):
        assert expected_utility((0.1, 0.2, 0.3, 0.4), TABLE, 0) == 0.0

    def test_linear(self):
        a = np.array([0.5, 0.2, 0.2, 0.1])
        b = np.array([0.1, 0.1, 0.1, 0.7])
        mix = 0.3 * a + 0.7 * b
        assert expected_utility(mix, TABLE, 200) == pytest.approx(
            0.3 * expected_utility(a, TABLE, 200) + 0.7 * expected_utility(b, TABLE, 200)
        )

    @pytest.mark.parametrize("field, value", [("u_true", 0.0), ("u_fp", 1.0), ("u_fn", 0.0), ("u_fd", 2.0)])
    def test_sign_validation(self, field, value):
        with pytest.raises(ConfigError) as info:
            UtilityTable(**{field: value})
        assert info.value.field == field


class TestEvit:
    def test_near_perfect_transfer(self):
        res = evit_from_alpha([1e9, 1e-300, 1e-300, 1e-300], TABLE, CFG, n_samples=0)
        assert res.expected_utility == pytest.approx(1000.0)
        assert res.baseline_utility == -2375.0

    def test_perfect_quality_exact(self):
        # the point value is linear in the mean, so q = (1, 0, 0, 0) gives the exact integer
        eu = expected_utility((1.0, 0.0, 0.0, 0.0), TABLE, 200)
        eu0 = expected_utility(null_baseline_quality(), TABLE, 200)
        assert eu - eu0 == 3375.0

    def test_baseline_mean_model(self):
        q0 = np.array(null_baseline_quality())
        model = constant_model(7.0 * q0)
        for s in (0.0, 0.3, 1.0):
            assert abs(evit(model, s, TABLE, CFG, n_samples=0).evit) < 1e-9

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(0.01, 1e4),
        st.floats(-1e4, -0.01),
        st.floats(-1e4, -0.01),
        st.floats(-1e4, -0.01),
        st.integers(1, 10_000),
    )
    def test_null_strategy_is_zero(self, ut, ufp, ufn, ufd, m):
        assert null_evit(UtilityTable(ut, ufp, ufn, ufd), ValuationConfig(target_size=m)) == 0.0

    def test_sampled_mean_agrees(self):
        alpha = np.array([6.0, 1.0, 2.0, 1.5])
        res = evit_from_alpha(alpha, TABLE, CFG, n_samples=100_000, seed=1)
        assert abs(res.samples.mean() - res.evit) < 3 * res.standard_error

    def test_interval(self):
        res = evit_from_alpha([6.0, 1.0, 2.0, 1.5], TABLE, CFG, n_samples=20_000, seed=2)
        lo, hi = res.interval(0.9)
        assert lo < res.evit < hi
        lo99, hi99 = res.interval(0.99)
        assert lo99 <= lo and hi99 >= hi

    def test_seeded(self):
        a = evit_from_alpha([3, 1, 1, 1], TABLE, CFG, n_samples=100, seed=4).samples
        b = evit_from_alpha([3, 1, 1, 1], TABLE, CFG, n_samples=100, seed=4).samples
        assert a.tobytes() == b.tobytes()

    def test_curve(self):
        rows = evit_curve(rising_model(), np.linspace(0, 1, 6), TABLE, CFG, n_samples=200, seed=0)
        values = [r[1] for r in rows]
        assert values == sorted(values)
        text = evit_curve_to_csv(rows)
        assert text.splitlines()[0].split(",") == list(EVIT_CURVE_HEADER)


class TestStrategy:
    def test_higher_similarity_wins(self):
        best, ranked = optimize_strategy(rising_model(), {"A": 0.2, "B": 0.9}, TABLE, CFG)
        assert best.source == "B"
        assert [c.strategy.source for c in ranked][0] == "B"
        assert len(ranked) == 3

    def test_negative_transfer_picks_null(self):
        # every candidate is worse than guessing
        model = constant_model([0.2, 3.0, 3.0, 3.0])
        best, ranked = optimize_strategy(model, {"A": 0.1, "B": 0.5, "C": 0.9}, TABLE, CFG)
        assert best == TransferStrategy.null()
        assert all(c.evit < 0 for c in ranked if c.strategy.source is not None)

    def test_expensive_transfer_picks_null(self):
        model = rising_model()
        gain = evit(model, 0.9, TABLE, CFG, n_samples=0).evit
        assert gain > 0
        cfg = ValuationConfig(transfer_costs={"B": -10.0 * gain})
        best, _ = optimize_strategy(model, {"B": 0.9}, TABLE, cfg)
        assert best == TransferStrategy.null()

    def test_utility_scale_invariance(self):
        model = rising_model()
        cands = {"A": 0.1, "B": 0.4, "C": 0.8}
        scaled = UtilityTable(*(3.0 * TABLE.as_array()))
        assert optimize_strategy(model, cands, TABLE, CFG)[0] == optimize_strategy(model, cands, scaled, CFG)[0]

    def test_null_wins_ties(self):
        model = rising_model()
        gain = evit(model, 0.5, TABLE, CFG, n_samples=0).evit
        # a cost that exactly cancels the gain leaves both totals at zero
        best, ranked = optimize_strategy(model, {"A": 0.5}, TABLE, ValuationConfig(transfer_costs={"A": -gain}))
        assert ranked[0].total == ranked[1].total == 0.0
        assert best == TransferStrategy.null()

    def test_equal_sources_prefer_smaller_id(self):
        best, _ = optimize_strategy(rising_model(), {"Z": 0.7, "A": 0.7}, TABLE, CFG)
        assert best.source == "A"

    def test_no_candidates(self):
        with pytest.raises(InvalidInputError):
            optimize_strategy(rising_model(), {}, TABLE, CFG)

    def test_report(self):
        best, ranked = optimize_strategy(rising_model(), {"A": 0.2, "B": 0.9}, TABLE, CFG)
        d = json.loads(recommendation_report("T1", best, ranked))
        assert d["target_id"] == "T1" and d["chosen"] == "B"
        assert sum(c["chosen"] for c in d["candidates"]) == 1
        assert {c["source"] for c in d["candidates"]} == {None, "A", "B"}


def test_valuation_config_validation():
    with pytest.raises(ConfigError) as info:
        ValuationConfig(target_size=0)
    assert info.value.field == "target_size"
