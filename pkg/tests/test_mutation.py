"""Random mutation operators, per-condition losses, targeted hill-climb."""

import math
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lstmcov.abstraction import Abstraction, Component, Symbolizer
from lstmcov.coverage import (
    BCLower,
    BCUpper,
    ConditionSet,
    SCCondition,
    TCCondition,
    ThresholdConfig,
    build_conditions,
    default_metrics,
    estimate_thresholds,
)
from lstmcov.lstm_core import (
    ContinuousInput,
    DenseLayerParams,
    GateWeights,
    LstmLayerParams,
    ModelSpec,
    StepTrace,
    TokenInput,
    Trace,
    run_model,
)
from lstmcov.mutation import (
    EQUIVALENCE_OP,
    CoverageLoss,
    MutationConfig,
    MutationError,
    coverage_loss,
    random_mutate,
    run_equivalence_command,
    targeted_mutate,
)

from test_lstm_core import random_input, random_model


def token_input(ids, vocab=10, pad=0):
    return TokenInput(ids=tuple(ids), vocab_size=vocab, pad_id=pad)


class TestConfig:
    def test_rejects_bad_sigma(self):
        with pytest.raises(MutationError, match="gaussian_sigma"):
            MutationConfig(gaussian_sigma=0.0)
        with pytest.raises(MutationError, match="gaussian_sigma"):
            MutationConfig(gaussian_sigma=-1.0)

    def test_rejects_unknown_op(self):
        with pytest.raises(MutationError, match="unknown token op"):
            MutationConfig(token_ops=("substitute", "transpose"))

    def test_equivalence_needs_command(self):
        with pytest.raises(MutationError, match="equivalence_command"):
            MutationConfig(token_ops=("swap", EQUIVALENCE_OP))

    def test_sigma_default_is_fraction_of_clamp(self):
        cfg = MutationConfig()
        assert cfg.resolve_sigma((-1.0, 1.0)) == pytest.approx(0.1)
        assert cfg.resolve_sigma((0.0, 255.0)) == pytest.approx(12.75)
        assert MutationConfig(gaussian_sigma=0.3).resolve_sigma((-1.0, 1.0)) == 0.3

    def test_json_round_trip(self):
        cfg = MutationConfig(
            gaussian_sigma=0.07,
            token_ops=("swap", "delete"),
            substitution_table={3: (4, 5), 7: (1,)},
            rng_seed=9,
        )
        again = MutationConfig.from_json(cfg.to_json())
        assert again == cfg


class TestContinuousMutation:
    def test_stays_inside_clamp(self):
        rng = np.random.default_rng(0)
        x = ContinuousInput(values=np.full((6, 3), 0.95), clamp=(-1.0, 1.0))
        cfg = MutationConfig(gaussian_sigma=0.5)
        for _ in range(200):
            m = random_mutate(x, cfg, rng)
            assert m.values.min() >= -1.0 and m.values.max() <= 1.0
            assert m.values.shape == x.values.shape
            assert m.clamp == x.clamp

    def test_noise_magnitude_matches_folded_normal(self):
        # For N(0, sigma) noise far from the clamp walls, E|delta| is
        # sigma * sqrt(2/pi).
        rng = np.random.default_rng(42)
        sigma = 0.05
        x = ContinuousInput(values=np.zeros((50, 20)), clamp=(-1.0, 1.0))
        cfg = MutationConfig(gaussian_sigma=sigma)
        deltas = []
        for _ in range(30):
            m = random_mutate(x, cfg, rng)
            deltas.append(np.abs(m.values - x.values).ravel())
        mean_abs = float(np.concatenate(deltas).mean())
        expect = sigma * math.sqrt(2.0 / math.pi)
        assert abs(mean_abs - expect) / expect < 0.05

    def test_default_sigma_used_when_unset(self):
        rng = np.random.default_rng(7)
        x = ContinuousInput(values=np.zeros((40, 25)), clamp=(-2.0, 2.0))
        m = random_mutate(x, MutationConfig(), rng)
        mean_abs = float(np.abs(m.values - x.values).mean())
        expect = 0.05 * 4.0 * math.sqrt(2.0 / math.pi)  # sigma = 0.2
        assert abs(mean_abs - expect) / expect < 0.15

    def test_seeded_determinism(self):
        x = ContinuousInput(values=np.linspace(-1, 1, 12).reshape(4, 3), clamp=(-1.0, 1.0))
        cfg = MutationConfig(gaussian_sigma=0.1)
        a = [random_mutate(x, cfg, np.random.default_rng(5)) for _ in range(1)][0]
        b = random_mutate(x, cfg, np.random.default_rng(5))
        assert np.array_equal(a.values, b.values)


class TestTokenMutation:
    def test_substitute_changes_one_listed_position(self):
        rng = np.random.default_rng(3)
        x = token_input((1, 4, 1, 2), vocab=6, pad=0)
        cfg = MutationConfig(token_ops=("substitute",), substitution_table={1: (3, 5)})
        for _ in range(100):
            m = random_mutate(x, cfg, rng)
            diff = [p for p in range(4) if m.ids[p] != x.ids[p]]
            assert len(diff) == 1
            p = diff[0]
            assert x.ids[p] == 1 and m.ids[p] in (3, 5)

    def test_substitute_without_entries_falls_back(self):
        rng = np.random.default_rng(8)
        x = token_input((2, 4, 6), vocab=8)
        cfg = MutationConfig(token_ops=("substitute", "swap"), substitution_table={1: (3,)})
        m = random_mutate(x, cfg, rng)
        assert sorted(m.ids) == sorted(x.ids)  # swap is the only fallback here

    def test_insert_shifts_and_drops_tail(self):
        rng = np.random.default_rng(11)
        x = token_input((5, 6, 7, 8), vocab=10, pad=0)
        cfg = MutationConfig(token_ops=("insert",))
        seen_positions = set()
        for _ in range(300):
            m = random_mutate(x, cfg, rng)
            assert len(m.ids) == 4
            matches = [
                (p, m.ids[p])
                for p in range(4)
                if m.ids[:p] == x.ids[:p] and m.ids[p + 1 :] == x.ids[p : 3]
            ]
            assert matches, f"{m.ids} is not an insertion into {x.ids}"
            p, tok = matches[0]
            assert tok != x.pad_id
            seen_positions.add(p)
        assert seen_positions == {0, 1, 2, 3}

    def test_delete_appends_pad(self):
        rng = np.random.default_rng(13)
        x = token_input((5, 6, 7, 8), vocab=10, pad=0)
        cfg = MutationConfig(token_ops=("delete",))
        expected = {x.ids[:p] + x.ids[p + 1 :] + (0,) for p in range(4)}
        seen = set()
        for _ in range(300):
            m = random_mutate(x, cfg, rng)
            assert m.ids in expected
            seen.add(m.ids)
        assert seen == expected

    def test_swap_preserves_multiset(self):
        rng = np.random.default_rng(17)
        x = token_input((1, 2, 3, 4, 5), vocab=6)
        cfg = MutationConfig(token_ops=("swap",))
        for _ in range(100):
            m = random_mutate(x, cfg, rng)
            assert sorted(m.ids) == sorted(x.ids)

    @given(
        ids=st.lists(st.integers(0, 9), min_size=1, max_size=12),
        op=st.sampled_from(("substitute", "insert", "swap", "delete")),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=150, deadline=None)
    def test_ops_preserve_validity(self, ids, op, seed):
        x = token_input(ids, vocab=10, pad=0)
        cfg = MutationConfig(token_ops=(op,), substitution_table={i: (9 - i,) for i in range(10)})
        m = random_mutate(x, cfg, np.random.default_rng(seed))
        assert isinstance(m, TokenInput)
        assert len(m.ids) == len(ids)
        assert m.vocab_size == 10 and m.pad_id == 0
        assert all(0 <= t < 10 for t in m.ids)

    def test_seeded_determinism(self):
        x = token_input((3, 1, 4, 1, 5), vocab=9)
        cfg = MutationConfig(substitution_table={1: (2, 7)})
        a = random_mutate(x, cfg, np.random.default_rng(21))
        b = random_mutate(x, cfg, np.random.default_rng(21))
        assert a.ids == b.ids


EQUIV_NEGATE = (
    sys.executable,
    "-c",
    (
        "import json,sys\n"
        "d = json.loads(sys.stdin.readline())\n"
        "d['values'] = [[-v for v in row] for row in d['values']]\n"
        "print(json.dumps(d))"
    ),
)


class TestEquivalenceCommand:
    def test_variant_comes_from_command(self):
        x = ContinuousInput(values=np.array([[0.25], [-0.5]]), clamp=(-1.0, 1.0))
        cfg = MutationConfig(equivalence_command=EQUIV_NEGATE)
        m = run_equivalence_command(x, cfg, np.random.default_rng(0))
        assert np.allclose(m.values, -x.values)

    def test_failure_is_reported(self):
        x = ContinuousInput(values=np.zeros((2, 1)), clamp=(-1.0, 1.0))
        cfg = MutationConfig(
            equivalence_command=(sys.executable, "-c", "import sys; sys.exit(3)")
        )
        with pytest.raises(MutationError, match="code 3"):
            run_equivalence_command(x, cfg, np.random.default_rng(0))

    def test_empty_output_is_an_error(self):
        x = ContinuousInput(values=np.zeros((2, 1)), clamp=(-1.0, 1.0))
        cfg = MutationConfig(equivalence_command=(sys.executable, "-c", "pass"))
        with pytest.raises(MutationError, match="no variants"):
            run_equivalence_command(x, cfg, np.random.default_rng(0))

    def test_length_change_is_an_error(self):
        x = ContinuousInput(values=np.zeros((3, 1)), clamp=(-1.0, 1.0))
        truncate = (
            sys.executable,
            "-c",
            (
                "import json,sys\n"
                "d = json.loads(sys.stdin.readline())\n"
                "d['values'] = d['values'][:2]\n"
                "print(json.dumps(d))"
            ),
        )
        cfg = MutationConfig(equivalence_command=truncate)
        with pytest.raises(MutationError, match="2 steps"):
            run_equivalence_command(x, cfg, np.random.default_rng(0))


@pytest.fixture(scope="module")
def loss_setup():
    rng = np.random.default_rng(88)
    model = random_model(rng, units=5, input_dim=3, n_steps=6, with_pre=False)
    inputs = [random_input(rng, model) for _ in range(25)]
    traces = [run_model(model, x) for x in inputs]
    thresholds = estimate_thresholds(model, inputs, ThresholdConfig())
    conds = ConditionSet(thresholds, default_metrics(), model.n_steps)
    return model, inputs, traces, thresholds, conds


class TestCoverageLoss:
    def test_zero_iff_satisfied_and_matches_batch_losses(self, loss_setup):
        model, inputs, traces, thresholds, conds = loss_setup
        rng = np.random.default_rng(9)
        fresh = [run_model(model, random_input(rng, model)) for _ in range(10)]
        for tr in traces[:5] + fresh:
            sat, losses = conds.evaluate_and_losses(tr)
            for cond in conds.conditions:
                single = coverage_loss(cond, tr, thresholds)
                assert (single == 0.0) == bool(sat[cond.id])
                assert single == pytest.approx(float(losses[cond.id]), abs=1e-12)

    def test_bc_losses_are_linear_shortfalls(self):
        cond_hi = BCUpper(Component.H, Abstraction.POSITIVE, t=2, v_max=3.0)
        cond_lo = BCLower(Component.H, Abstraction.POSITIVE, t=2, v_min=0.5)
        steps = [
            StepTrace(t=k, f=z, i=z, o=z, c=z, h=h)
            for k, (z, h) in enumerate(
                [(np.zeros(2), np.array([0.4, 0.3])), (np.zeros(2), np.array([1.0, 0.9]))],
                start=1,
            )
        ]
        tr = Trace(steps=tuple(steps), output=np.zeros(1), prediction=0.0)
        # xi(h,+) at t=2 is 1.9
        thr = None
        assert coverage_loss(cond_hi, tr, thr) == pytest.approx(3.0 - 1.9)
        assert coverage_loss(cond_lo, tr, thr) == pytest.approx(1.9 - 0.5)
        assert coverage_loss(BCLower(Component.H, Abstraction.POSITIVE, 2, 1.9), tr, thr) == 0.0

    def test_sc_loss_uses_total_variation_of_both_signs(self):
        cond = SCCondition(Component.H, t=2, v_sc=2.0)
        h1 = np.array([0.5, -0.25])
        h2 = np.array([0.9, -0.75])
        z = np.zeros(2)
        tr = Trace(
            steps=(
                StepTrace(1, z, z, z, z, h1),
                StepTrace(2, z, z, z, z, h2),
            ),
            output=np.zeros(1),
            prediction=0.0,
        )
        # delta = |0.9-0.5| + |-0.75-(-0.25)| = 0.9
        assert coverage_loss(cond, tr, None) == pytest.approx(2.0 - 0.9)

    def test_tc_loss_is_hamming_distance(self):
        # Observed word "bcaac", target "bcaab": one letter differs.
        sym = Symbolizer(alphabet_size=3, mu=1.0, sigma=1.0, breakpoints=np.array([0.5, 1.5]))
        thr_stub = type("T", (), {"symbolizers": {(Component.H, Abstraction.POSITIVE): sym}})()
        hs = [1.0, 2.0, 0.0, 0.0, 2.0]  # symbols 1 2 0 0 2
        z = np.zeros(1)
        steps = tuple(
            StepTrace(t, z, z, z, z, np.array([v])) for t, v in enumerate(hs, start=1)
        )
        tr = Trace(steps=steps, output=np.zeros(1), prediction=0.0)
        target_same = TCCondition(
            Component.H, Abstraction.POSITIVE, span=(1, 5), word=(1, 2, 0, 0, 2)
        )
        target_off1 = TCCondition(
            Component.H, Abstraction.POSITIVE, span=(1, 5), word=(1, 2, 0, 0, 1)
        )
        target_off3 = TCCondition(
            Component.H, Abstraction.POSITIVE, span=(1, 5), word=(0, 1, 0, 0, 1)
        )
        assert coverage_loss(target_same, tr, thr_stub) == 0.0
        assert coverage_loss(target_off1, tr, thr_stub) == 1.0
        assert coverage_loss(target_off3, tr, thr_stub) == 3.0

    def test_tc_loss_without_symbolizer_is_an_error(self, loss_setup):
        *_, thresholds, _ = loss_setup
        cond = TCCondition(Component.F, Abstraction.AVERAGE, span=(1, 5), word=(0,) * 5)
        z = np.zeros(1)
        tr = Trace(
            steps=tuple(StepTrace(t, z, z, z, z, z) for t in range(1, 7)),
            output=np.zeros(1),
            prediction=0.0,
        )
        with pytest.raises(MutationError, match="f.avg"):
            coverage_loss(cond, tr, thresholds)


def hill_climb_model():
    """One unit, one input feature, two steps; h grows with the inputs."""
    one = np.array([[2.0]])
    half = np.array([[0.5]])
    zero = np.zeros(1)
    gate = lambda: GateWeights(w_input=one, w_hidden=half, bias=zero)  # noqa: E731
    lstm = LstmLayerParams(
        units=1, input_dim=1,
        forget=gate(), input=gate(), candidate=gate(), output=gate(),
    )
    head = DenseLayerParams(weights=np.array([[1.0]]), bias=np.zeros(1), activation="linear")
    return ModelSpec(
        n_steps=2, task="regression", input_kind="continuous",
        lstm=lstm, post_layers=(head,),
    )


class TestTargetedMutate:
    def test_returns_input_unchanged_when_already_satisfied(self):
        model = hill_climb_model()
        x = ContinuousInput(values=np.zeros((2, 1)), clamp=(-1.0, 1.0))
        cond = BCUpper(Component.H, Abstraction.POSITIVE, t=1, v_max=-1.0)
        thr_stub = type("T", (), {"symbolizers": {}})()
        out = targeted_mutate(
            x, cond, model, MutationConfig(), max_iters=50,
            thresholds=thr_stub, rng=np.random.default_rng(0),
        )
        assert out is x

    def test_requires_thresholds(self):
        model = hill_climb_model()
        x = ContinuousInput(values=np.zeros((2, 1)), clamp=(-1.0, 1.0))
        cond = SCCondition(Component.H, t=1, v_sc=0.0)
        with pytest.raises(MutationError, match="thresholds"):
            targeted_mutate(x, cond, model, MutationConfig(), rng=np.random.default_rng(0))

    def test_reaches_grid_verified_boundary_condition(self):
        # The avg series of a one-unit model is h itself, smooth in the
        # inputs, so the greedy climb has a usable slope the whole way.
        model = hill_climb_model()
        grid = np.linspace(-1.0, 1.0, 41)
        best = -np.inf
        for a in grid:
            for b in grid:
                x = ContinuousInput(values=np.array([[a], [b]]), clamp=(-1.0, 1.0))
                tr = run_model(model, x)
                best = max(best, float(tr.steps[1].h[0]))
        assert best > 0.3  # the target is genuinely reachable
        cond = BCUpper(Component.H, Abstraction.AVERAGE, t=2, v_max=0.95 * best)
        # From the origin the surface rises monotonically toward (1, 1), so
        # sigma-sized steps always find an accepting direction.
        start = ContinuousInput(values=np.zeros((2, 1)), clamp=(-1.0, 1.0))
        thr_stub = type("T", (), {"symbolizers": {}})()

        seen = []
        out = targeted_mutate(
            start, cond, model, MutationConfig(gaussian_sigma=0.15),
            max_iters=400, thresholds=thr_stub,
            rng=np.random.default_rng(100),
            on_candidate=lambda x, tr, loss: seen.append(loss),
        )
        final = coverage_loss(cond, run_model(model, out), thr_stub)
        assert final == 0.0
        assert len(seen) <= 400

    def test_final_loss_is_min_of_everything_evaluated(self):
        rng = np.random.default_rng(55)
        model = random_model(rng, units=4, input_dim=2, n_steps=5, with_pre=False)
        x0 = random_input(rng, model)
        train = [random_input(rng, model) for _ in range(15)]
        thresholds = estimate_thresholds(model, train, ThresholdConfig())
        cond = SCCondition(
            Component.H, t=3, v_sc=thresholds.v_sc[Component.H] * 4.0
        )

        seen = []
        loss_fn = CoverageLoss(cond, thresholds)
        start_loss = loss_fn(run_model(model, x0))
        out = targeted_mutate(
            x0, cond, model, MutationConfig(gaussian_sigma=0.1),
            max_iters=60, thresholds=thresholds,
            rng=np.random.default_rng(77),
            on_candidate=lambda x, tr, loss: seen.append(loss),
        )
        final = loss_fn(run_model(model, out))
        assert final == pytest.approx(min([start_loss] + seen), abs=0.0)
        assert final <= start_loss
