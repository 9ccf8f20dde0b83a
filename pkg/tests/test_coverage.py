"""Threshold estimation, condition enumeration, evaluation, ledger.

estimate_thresholds is checked against a plain-loop scan oracle that walks
the same traces with float arithmetic and explicit comparisons.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lstmcov.abstraction import (
    Abstraction,
    Component,
    aggregate_negative,
    aggregate_positive,
    gate_average,
    series,
    symbolize,
)
from lstmcov.coverage import (
    BCLower,
    BCUpper,
    ConditionSet,
    CoverageError,
    CoverageLedger,
    EstimationError,
    MetricSpec,
    SCCondition,
    TCCondition,
    ThresholdConfig,
    Thresholds,
    build_conditions,
    centered_span,
    default_metrics,
    estimate_thresholds,
    evaluate_trace,
    load_thresholds,
    neuron_coverage,
    save_thresholds,
)
from lstmcov.lstm_core import ContinuousInput, run_model

from test_lstm_core import random_input, random_model


def scan_oracle(model, inputs, pairs, comps, tau):
    """Loop-based recomputation of BC/SC bounds, no vector shortcuts."""
    bc = {}
    sc = {}
    for x in inputs:
        tr = run_model(model, x)
        for (s, a) in pairs:
            for step in tr.steps:
                vec = getattr(step, s.value)
                if a is Abstraction.POSITIVE:
                    val = sum(float(u) for u in vec if u > 0)
                elif a is Abstraction.NEGATIVE:
                    val = sum(float(u) for u in vec if u < 0)
                else:
                    val = sum(float(u) for u in vec) / len(vec)
                hi, lo = bc.get((s, a), (-np.inf, np.inf))
                bc[(s, a)] = (max(hi, val), min(lo, val))
        for s in comps:
            prev_p, prev_m = 0.0, 0.0
            for step in tr.steps:
                vec = getattr(step, s.value)
                p = sum(float(u) for u in vec if u > 0)
                m = sum(float(u) for u in vec if u < 0)
                d = abs(p - prev_p) + abs(m - prev_m)
                sc[s] = max(sc.get(s, 0.0), d)
                prev_p, prev_m = p, m
    return bc, {s: tau * v for s, v in sc.items()}


@pytest.fixture(scope="module")
def small_setup():
    rng = np.random.default_rng(1234)
    model = random_model(rng, units=6, input_dim=4, n_steps=8, with_pre=False)
    inputs = [random_input(rng, model) for _ in range(20)]
    config = ThresholdConfig(tau=0.8, alphabet_size=2)
    th = estimate_thresholds(model, inputs, config)
    return model, inputs, config, th


class TestEstimation:
    def test_matches_scan_oracle(self, small_setup):
        model, inputs, config, th = small_setup
        pairs = [(Component.F, Abstraction.AVERAGE)]
        comps = [Component.H]
        bc, vsc = scan_oracle(model, inputs, pairs, comps, config.tau)
        got_hi, got_lo = th.bc[(Component.F, Abstraction.AVERAGE)]
        want_hi, want_lo = bc[(Component.F, Abstraction.AVERAGE)]
        assert got_hi == pytest.approx(want_hi, abs=1e-12)
        assert got_lo == pytest.approx(want_lo, abs=1e-12)
        assert th.v_sc[Component.H] == pytest.approx(vsc[Component.H], abs=1e-12)

    def test_singleton_training_set(self):
        """One training input: v_max and v_min are that trace's own extremes."""
        rng = np.random.default_rng(5)
        model = random_model(rng, units=4, input_dim=3, n_steps=6, with_pre=False)
        x = random_input(rng, model)
        th = estimate_thresholds(model, [x], ThresholdConfig(
            metrics=(MetricSpec("BC", Component.H, Abstraction.POSITIVE),
                     MetricSpec("SC", Component.H)),
        ))
        s = series(run_model(model, x), Component.H, Abstraction.POSITIVE).values[1:]
        hi, lo = th.bc[(Component.H, Abstraction.POSITIVE)]
        assert hi == pytest.approx(s.max(), abs=0)
        assert lo == pytest.approx(s.min(), abs=0)

    def test_tau_one_makes_sc_bound_the_max(self):
        rng = np.random.default_rng(6)
        model = random_model(rng, units=4, input_dim=3, n_steps=6, with_pre=False)
        inputs = [random_input(rng, model) for _ in range(5)]
        th1 = estimate_thresholds(model, inputs, ThresholdConfig(
            tau=1.0, metrics=(MetricSpec("SC", Component.H),)))
        _, vsc = scan_oracle(model, inputs, [], [Component.H], 1.0)
        assert th1.v_sc[Component.H] == pytest.approx(vsc[Component.H], abs=1e-12)

    def test_bc_bounds_tau_independent(self):
        rng = np.random.default_rng(7)
        model = random_model(rng, units=4, input_dim=3, n_steps=5, with_pre=False)
        inputs = [random_input(rng, model) for _ in range(6)]
        ms = (MetricSpec("BC", Component.F, Abstraction.AVERAGE),)
        a = estimate_thresholds(model, inputs, ThresholdConfig(tau=0.3, metrics=ms))
        b = estimate_thresholds(model, inputs, ThresholdConfig(tau=1.0, metrics=ms))
        assert a.bc == b.bc

    def test_empty_training_set(self):
        rng = np.random.default_rng(8)
        model = random_model(rng, with_pre=False)
        with pytest.raises(EstimationError, match="empty"):
            estimate_thresholds(model, [])

    def test_degenerate_series_raises(self):
        """A zero-weight model has constant series; SC and TC cannot be pinned."""
        from lstmcov.lstm_core import DenseLayerParams, GateWeights, LstmLayerParams, ModelSpec
        rng = np.random.default_rng(9)
        z = GateWeights(np.zeros((3, 2)), np.zeros((3, 3)), np.zeros(3))
        zm = ModelSpec(
            n_steps=5, task="classification", input_kind="continuous",
            lstm=LstmLayerParams(3, 2, z, z, z, z),
            post_layers=(DenseLayerParams(np.zeros((2, 3)), np.zeros(2), "softmax"),),
        )
        inputs = [ContinuousInput(values=rng.uniform(0, 1, (5, 2))) for _ in range(4)]
        with pytest.raises(EstimationError, match="step-wise change"):
            estimate_thresholds(zm, inputs, ThresholdConfig(
                metrics=(MetricSpec("SC", Component.H),)))
        with pytest.raises(EstimationError, match="symbolizer"):
            estimate_thresholds(zm, inputs, ThresholdConfig(
                metrics=(MetricSpec("TC", Component.H, Abstraction.POSITIVE),)))

    def test_training_witnesses_satisfy_bc(self, small_setup):
        """The argmax/argmin traces satisfy at least one BC condition each."""
        model, inputs, config, th = small_setup
        cs = ConditionSet(th, (MetricSpec("BC", Component.F, Abstraction.AVERAGE),),
                          model.n_steps)
        upper_hit = lower_hit = False
        for x in inputs:
            sat, _ = cs.evaluate_and_losses(run_model(model, x))
            for cid in np.flatnonzero(sat):
                cond = cs.conditions[cid]
                upper_hit |= isinstance(cond, BCUpper)
                lower_hit |= isinstance(cond, BCLower)
        assert upper_hit and lower_hit

    def test_thresholds_file_round_trip(self, small_setup, tmp_path):
        _, _, _, th = small_setup
        p = tmp_path / "th.json"
        save_thresholds(th, p)
        th2 = load_thresholds(p)
        assert th2.tau == th.tau
        assert th2.tc_span == th.tc_span
        assert th2.bc == th.bc
        assert th2.v_sc == th.v_sc
        for k, sym in th.symbolizers.items():
            np.testing.assert_array_equal(th2.symbolizers[k].breakpoints, sym.breakpoints)
        save_thresholds(th2, tmp_path / "th2.json")
        assert (tmp_path / "th.json").read_bytes() == (tmp_path / "th2.json").read_bytes()


class TestConditionCounts:
    def test_bc_count_is_2n(self, small_setup):
        model, _, _, th = small_setup
        conds = build_conditions(th, "BC", Component.F, Abstraction.AVERAGE, model.n_steps)
        assert len(conds) == 2 * model.n_steps
        assert sum(isinstance(c, BCUpper) for c in conds) == model.n_steps

    def test_sc_count_is_n(self, small_setup):
        model, _, _, th = small_setup
        assert len(build_conditions(th, "SC", Component.H, None, model.n_steps)) == model.n_steps

    def test_tc_word_counts(self, small_setup):
        """Five-step span: 2 letters gives 32 words, 3 letters gives 243."""
        model, inputs, _, _ = small_setup
        for k, want in ((2, 32), (3, 243)):
            th = estimate_thresholds(model, inputs, ThresholdConfig(
                alphabet_size=k,
                metrics=(MetricSpec("TC", Component.H, Abstraction.POSITIVE),),
            ))
            conds = build_conditions(th, "TC", Component.H, Abstraction.POSITIVE, model.n_steps)
            assert len(conds) == want

    def test_tc_cap(self, small_setup):
        model, inputs, _, _ = small_setup
        th = estimate_thresholds(model, inputs, ThresholdConfig(
            alphabet_size=4,
            metrics=(MetricSpec("TC", Component.H, Abstraction.POSITIVE),),
        ))
        with pytest.raises(CoverageError, match="cap"):
            build_conditions(th, "TC", Component.H, Abstraction.POSITIVE, model.n_steps,
                             max_conditions=100)

    def test_centered_span(self):
        assert centered_span(28) == (12, 16)
        assert centered_span(5) == (1, 5)
        assert centered_span(3) == (1, 3)
        assert centered_span(500) == (248, 252)

    def test_ids_stable_and_ordered(self, small_setup):
        model, _, _, th = small_setup
        cs1 = ConditionSet(th, default_metrics(), model.n_steps)
        cs2 = ConditionSet(th, tuple(reversed(default_metrics())), model.n_steps)
        assert [c.id for c in cs1.conditions] == list(range(len(cs1)))
        for a, b in zip(cs1.conditions, cs2.conditions):
            assert a == b  # order canonical regardless of metric list order
        # BC first, then SC, then TC
        kinds = [c.metric for c in cs1.conditions]
        assert kinds == sorted(kinds, key=("BC", "SC", "TC").index)


class TestEvaluate:
    def test_exactly_one_word_per_pair(self, small_setup):
        model, inputs, _, th = small_setup
        th2 = estimate_thresholds(model, inputs, ThresholdConfig(
            metrics=default_metrics()))
        cs = ConditionSet(th2, default_metrics(), model.n_steps)
        rng = np.random.default_rng(10)
        for _ in range(10):
            tr = run_model(model, random_input(rng, model))
            sat, _ = cs.evaluate_and_losses(tr)
            for pair in ((Component.H, Abstraction.POSITIVE),
                         (Component.H, Abstraction.NEGATIVE)):
                hits = [c for c in cs.conditions
                        if isinstance(c, TCCondition)
                        and (c.component, c.abstraction) == pair and sat[c.id]]
                assert len(hits) == 1
                word = symbolize(series(tr, *pair), th2.symbolizers[pair], th2.tc_span)
                assert hits[0].word == word.symbols

    def test_satisfaction_matches_direct_recomputation(self, small_setup):
        model, inputs, _, th = small_setup
        cs = ConditionSet(th, default_metrics(), model.n_steps)
        rng = np.random.default_rng(11)
        tr = run_model(model, random_input(rng, model))
        sat, loss = cs.evaluate_and_losses(tr)
        from lstmcov.abstraction import delta_series, series_values
        for cond in cs.conditions:
            if isinstance(cond, BCUpper):
                val = series_values(tr, cond.component, cond.abstraction)[cond.t]
                assert sat[cond.id] == (val >= cond.v_max)
                assert loss[cond.id] == pytest.approx(max(0.0, cond.v_max - val), abs=1e-15)
            elif isinstance(cond, BCLower):
                val = series_values(tr, cond.component, cond.abstraction)[cond.t]
                assert sat[cond.id] == (val <= cond.v_min)
            elif isinstance(cond, SCCondition):
                d = delta_series(tr, cond.component)[cond.t - 1]
                assert sat[cond.id] == (d >= cond.v_sc)
                assert loss[cond.id] == pytest.approx(max(0.0, cond.v_sc - d), abs=1e-15)

    def test_zero_weight_model_bc_on_pinned_thresholds(self):
        """Degenerate model against hand-made thresholds: no BC bound is crossed
        when v_max > 0.5 > v_min for the constant 0.5 gate-average series."""
        from lstmcov.lstm_core import DenseLayerParams, GateWeights, LstmLayerParams, ModelSpec
        z = GateWeights(np.zeros((3, 2)), np.zeros((3, 3)), np.zeros(3))
        zm = ModelSpec(
            n_steps=4, task="classification", input_kind="continuous",
            lstm=LstmLayerParams(3, 2, z, z, z, z),
            post_layers=(DenseLayerParams(np.zeros((2, 3)), np.zeros(2), "softmax"),),
        )
        th = Thresholds(
            tau=0.8, tc_span=(1, 4),
            bc={(Component.F, Abstraction.AVERAGE): (0.9, 0.1)},
            v_sc={}, symbolizers={},
        )
        cs = ConditionSet(th, (MetricSpec("BC", Component.F, Abstraction.AVERAGE),), 4)
        tr = run_model(zm, ContinuousInput(values=np.zeros((4, 2))))
        assert evaluate_trace(cs, tr) == frozenset()

    def test_trace_length_mismatch(self, small_setup):
        model, _, _, th = small_setup
        cs = ConditionSet(th, default_metrics(), model.n_steps)
        rng = np.random.default_rng(12)
        other = random_model(rng, units=3, input_dim=2, n_steps=model.n_steps + 1,
                             with_pre=False)
        tr = run_model(other, random_input(rng, other))
        with pytest.raises(CoverageError, match="steps"):
            cs.evaluate(tr)


class TestLedger:
    def test_update_and_rates(self, small_setup):
        model, inputs, _, th = small_setup
        cs = ConditionSet(th, default_metrics(), model.n_steps)
        ledger = CoverageLedger(cs)
        assert ledger.coverage_rate() == 0.0
        new = ledger.update(cs.evaluate(run_model(model, inputs[0])), case_id=0)
        assert len(new) > 0
        assert all(ledger.first_hit[c] == 0 for c in new)
        rate1 = ledger.coverage_rate()
        new2 = ledger.update(cs.evaluate(run_model(model, inputs[1])), case_id=1)
        assert ledger.coverage_rate() >= rate1
        assert set(new) & set(new2) == set()

    def test_rate_is_hit_fraction(self, small_setup):
        model, inputs, _, th = small_setup
        cs = ConditionSet(th, default_metrics(), model.n_steps)
        ledger = CoverageLedger(cs)
        for k, x in enumerate(inputs):
            ledger.update(cs.evaluate(run_model(model, x)), case_id=k)
        assert ledger.coverage_rate() == pytest.approx(
            np.count_nonzero(ledger.hit_count) / len(cs), abs=0)
        mr = ledger.metric_rates()
        assert set(mr) == set(cs.metric_keys)
        # suite-size partition: each trace satisfies exactly one word per pair
        for key in ("TC:h:+", "TC:h:-"):
            ids = cs.metric_condition_ids(key)
            assert ledger.hit_count[ids].sum() == len(inputs)

    def test_coverage_times_shape(self, small_setup):
        model, inputs, _, th = small_setup
        cs = ConditionSet(th, default_metrics(), model.n_steps)
        ledger = CoverageLedger(cs)
        for k, x in enumerate(inputs[:5]):
            ledger.update(cs.evaluate(run_model(model, x)), case_id=k)
        rows = ledger.coverage_times()
        n = model.n_steps
        bc_rows = [r for r in rows if r[0] == "BC"]
        sc_rows = [r for r in rows if r[0] == "SC"]
        tc_rows = [r for r in rows if r[0] == "TC"]
        assert len(bc_rows) == n and len(sc_rows) == n and len(tc_rows) == 2
        total_hits = sum(r[4] for r in rows)
        assert total_hits == int(ledger.hit_count.sum())


class TestNeuronCoverage:
    def test_zero_weight_model_never_covers(self):
        from lstmcov.lstm_core import DenseLayerParams, GateWeights, LstmLayerParams, ModelSpec
        z = GateWeights(np.zeros((3, 2)), np.zeros((3, 3)), np.zeros(3))
        zm = ModelSpec(
            n_steps=4, task="classification", input_kind="continuous",
            lstm=LstmLayerParams(3, 2, z, z, z, z),
            post_layers=(DenseLayerParams(np.zeros((2, 3)), np.zeros(2), "softmax"),),
        )
        traces = [run_model(zm, ContinuousInput(values=np.zeros((4, 2))))]
        assert neuron_coverage(zm, traces) == 0.0

    def test_monotone_in_threshold_and_traces(self, small_setup):
        model, inputs, _, _ = small_setup
        traces = [run_model(model, x) for x in inputs]
        few = neuron_coverage(model, traces[:2])
        many = neuron_coverage(model, traces)
        assert many >= few
        hard = neuron_coverage(model, traces, threshold=10.0)
        assert hard <= many

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_bounded(self, seed):
        rng = np.random.default_rng(seed)
        model = random_model(rng, with_pre=False)
        traces = [run_model(model, random_input(rng, model)) for _ in range(3)]
        nc = neuron_coverage(model, traces)
        assert 0.0 <= nc <= 1.0
