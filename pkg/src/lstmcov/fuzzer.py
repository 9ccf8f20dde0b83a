"""Coverage-guided test generation against an adversarial-example oracle.

The run loop keeps a corpus of test cases, each traceable in one hop to the
seed it descends from. Cases are drawn from a priority queue that favors
inputs close to satisfying an unmet condition, inputs that already exposed
an oracle failure, and inputs that hit conditions first. Mutation starts
random; once the coverage rate stalls, the loop switches to per-condition
targeted search, parking conditions it cannot crack until fresh progress
reopens them.

A case fails the oracle when it stays within the configured input radius of
its seed yet changes the model's prediction. Those cases are the adversarial
set; the adversary rate is their share of all generated cases.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .coverage import ConditionSet, CoverageLedger, MetricSpec, Thresholds, default_metrics
from .lstm_core import (
    ContinuousInput,
    InputError,
    InputSequence,
    ModelSpec,
    TokenInput,
    input_from_json,
    input_to_json,
)
from .lstm_core import run_model as _run_model
from .mutation import MutationConfig, coverage_loss, random_mutate, targeted_mutate


class FuzzError(ValueError):
    pass


@dataclass(frozen=True)
class TestCase:
    """One corpus entry. Seeds are their own origin; generated cases point
    at the seed their mutation chain started from."""

    __test__ = False  # not a pytest class, despite the name

    id: int
    input: InputSequence
    origin_id: int
    prediction: int | float
    distance_to_origin: float
    satisfied_new: tuple[int, ...] = ()
    adversarial: bool = False

    @property
    def is_seed(self) -> bool:
        return self.origin_id == self.id

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "input": input_to_json(self.input),
            "origin_id": self.origin_id,
            "prediction": self.prediction,
            "distance_to_origin": self.distance_to_origin,
            "satisfied_new": list(self.satisfied_new),
            "adversarial": self.adversarial,
        }

    @classmethod
    def from_json(cls, d: dict) -> "TestCase":
        return cls(
            id=int(d["id"]),
            input=input_from_json(d["input"]),
            origin_id=int(d["origin_id"]),
            prediction=d["prediction"],
            distance_to_origin=float(d["distance_to_origin"]),
            satisfied_new=tuple(int(i) for i in d.get("satisfied_new", ())),
            adversarial=bool(d.get("adversarial", False)),
        )


@dataclass(frozen=True)
class Corpus:
    cases: tuple[TestCase, ...]
    seed_count: int

    def __post_init__(self):
        cases = tuple(self.cases)
        object.__setattr__(self, "cases", cases)
        if any(c.id != k for k, c in enumerate(cases)):
            raise FuzzError("case ids must equal their corpus position")
        seed_ids = {c.id for c in cases[: self.seed_count]}
        for c in cases:
            if c.is_seed and c.id >= self.seed_count:
                raise FuzzError(f"case {c.id} is self-originated but past the seed prefix")
            if not c.is_seed and c.origin_id not in seed_ids:
                raise FuzzError(f"case {c.id} does not resolve to a seed in one hop")

    @property
    def generated(self) -> tuple[TestCase, ...]:
        return self.cases[self.seed_count :]

    @property
    def adversarial_ids(self) -> tuple[int, ...]:
        return tuple(c.id for c in self.cases if c.adversarial)

    def case(self, case_id: int) -> TestCase:
        return self.cases[case_id]


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w") as fh:
        for case in corpus.cases:
            fh.write(json.dumps(case.to_json(), sort_keys=True) + "\n")


def load_corpus(path) -> Corpus:
    cases = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                cases.append(TestCase.from_json(json.loads(line)))
            except (KeyError, ValueError, InputError) as e:
                raise FuzzError(f"{path}:{lineno}: bad corpus line ({e})") from e
    seed_count = sum(1 for c in cases if c.is_seed)
    return Corpus(cases=tuple(cases), seed_count=seed_count)


@dataclass(frozen=True)
class FuzzConfig:
    """Run parameters.

    oracle_radius None lifts the distance clause entirely (any mutant that
    flips the prediction counts). random_phase_budget holds off targeted
    mutation until that many cases exist; setting it at or above max_cases
    turns the run into pure random mutation.
    """

    oracle_radius: float | None = None
    target_coverage_rate: float = 1.0
    max_cases: int = 2000
    random_phase_budget: int = 0
    stall_window: int = 200
    targeted_iters: int = 100
    regression_epsilon: float = 0.05
    rng_seed: int = 0
    worker_count: int = 1
    weight_loss: float = 1.0
    weight_adversarial: float = 2.0
    weight_novelty: float = 1.0

    def __post_init__(self):
        if self.oracle_radius is not None and self.oracle_radius < 0:
            raise FuzzError(f"oracle_radius must be >= 0, got {self.oracle_radius}")
        if not (0.0 < self.target_coverage_rate <= 1.0):
            raise FuzzError(
                f"target_coverage_rate must be in (0, 1], got {self.target_coverage_rate}"
            )
        for name in ("max_cases", "random_phase_budget", "stall_window", "targeted_iters"):
            if getattr(self, name) < 0:
                raise FuzzError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.worker_count < 1:
            raise FuzzError(f"worker_count must be >= 1, got {self.worker_count}")
        if self.regression_epsilon < 0:
            raise FuzzError(f"regression_epsilon must be >= 0, got {self.regression_epsilon}")

    def to_json(self) -> dict:
        return {
            "oracle_radius": self.oracle_radius,
            "target_coverage_rate": self.target_coverage_rate,
            "max_cases": self.max_cases,
            "random_phase_budget": self.random_phase_budget,
            "stall_window": self.stall_window,
            "targeted_iters": self.targeted_iters,
            "regression_epsilon": self.regression_epsilon,
            "rng_seed": self.rng_seed,
            "worker_count": self.worker_count,
            "weights": [self.weight_loss, self.weight_adversarial, self.weight_novelty],
        }

    @classmethod
    def from_json(cls, d: dict) -> "FuzzConfig":
        w = d.get("weights", [1.0, 2.0, 1.0])
        return cls(
            oracle_radius=d.get("oracle_radius"),
            target_coverage_rate=float(d.get("target_coverage_rate", 1.0)),
            max_cases=int(d.get("max_cases", 2000)),
            random_phase_budget=int(d.get("random_phase_budget", 0)),
            stall_window=int(d.get("stall_window", 200)),
            targeted_iters=int(d.get("targeted_iters", 100)),
            regression_epsilon=float(d.get("regression_epsilon", 0.05)),
            rng_seed=int(d.get("rng_seed", 0)),
            worker_count=int(d.get("worker_count", 1)),
            weight_loss=float(w[0]),
            weight_adversarial=float(w[1]),
            weight_novelty=float(w[2]),
        )


@dataclass(frozen=True)
class RunReport:
    config: dict
    metric_keys: tuple[str, ...]
    seed_count: int
    generated_count: int
    conditions_total: int
    conditions_hit: int
    final_rates: dict
    overall_rate: float
    rate_history: tuple[dict, ...]
    adversary_rate: float
    adversarial_ids: tuple[int, ...]
    generated_by_phase: dict
    target_reached: bool
    coverage_times: tuple[tuple, ...]
    wall_clock_seconds: float

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "metric_keys": list(self.metric_keys),
            "seed_count": self.seed_count,
            "generated_count": self.generated_count,
            "conditions_total": self.conditions_total,
            "conditions_hit": self.conditions_hit,
            "final_rates": dict(self.final_rates),
            "overall_rate": self.overall_rate,
            "rate_history": [dict(r) for r in self.rate_history],
            "adversary_rate": self.adversary_rate,
            "adversarial_ids": list(self.adversarial_ids),
            "generated_by_phase": dict(self.generated_by_phase),
            "target_reached": self.target_reached,
            "coverage_times": [list(r) for r in self.coverage_times],
            "wall_clock_seconds": self.wall_clock_seconds,
        }


# ── distances and the oracle ──────────────────────────────────────────────


def input_distance(a: InputSequence, b: InputSequence) -> float:
    """L2 over flattened values for continuous inputs; fraction of changed
    positions for token inputs."""
    if isinstance(a, ContinuousInput) and isinstance(b, ContinuousInput):
        if a.values.shape != b.values.shape:
            raise FuzzError(f"shape mismatch {a.values.shape} vs {b.values.shape}")
        return float(np.linalg.norm((a.values - b.values).ravel()))
    if isinstance(a, TokenInput) and isinstance(b, TokenInput):
        if len(a.ids) != len(b.ids):
            raise FuzzError(f"length mismatch {len(a.ids)} vs {len(b.ids)}")
        changed = sum(1 for x, y in zip(a.ids, b.ids) if x != y)
        return changed / len(a.ids)
    raise FuzzError("cannot compare continuous and token inputs")


def _predictions_differ(pred_a, pred_b, task: str, epsilon: float) -> bool:
    if task == "regression":
        return abs(float(pred_a) - float(pred_b)) > epsilon
    return int(pred_a) != int(pred_b)


def oracle_check(candidate: TestCase, seed: TestCase, model: ModelSpec,
                 cfg: FuzzConfig) -> bool:
    """True when the candidate is adversarial: within oracle_radius of its
    seed (vacuously, if the radius is unbounded) with a different prediction."""
    if candidate.origin_id != seed.id:
        raise FuzzError(
            f"case {candidate.id} originates from {candidate.origin_id}, not {seed.id}"
        )
    if cfg.oracle_radius is not None:
        if input_distance(candidate.input, seed.input) > cfg.oracle_radius:
            return False
    return _predictions_differ(
        candidate.prediction, seed.prediction, model.task, cfg.regression_epsilon
    )


def adversary_rate(corpus: Corpus) -> float:
    generated = corpus.generated
    if not generated:
        return 0.0
    return sum(1 for c in generated if c.adversarial) / len(generated)


def recompute_adversarial(corpus: Corpus, model: ModelSpec, cfg: FuzzConfig) -> tuple[int, ...]:
    """Re-run the oracle over a stored corpus, e.g. at a different radius."""
    out = []
    for case in corpus.generated:
        if oracle_check(case, corpus.case(case.origin_id), model, cfg):
            out.append(case.id)
    return tuple(out)


# ── selection ─────────────────────────────────────────────────────────────


def selection_score(min_loss: float, is_adversarial: bool, novelty: int,
                    cfg: FuzzConfig) -> float:
    """Base priority of a case before the reuse penalty."""
    return (
        cfg.weight_loss / (1.0 + min_loss)
        + cfg.weight_adversarial * float(is_adversarial)
        + cfg.weight_novelty * float(novelty)
    )


class _Stop(Exception):
    """Internal: budget or target reached inside a targeted burst."""


class _RunState:
    """Mutable bookkeeping for one run; the coordinator owns it exclusively."""

    def __init__(self, model: ModelSpec, condition_set: ConditionSet,
                 thresholds: Thresholds, cfg: FuzzConfig, capacity: int):
        self.model = model
        self.conditions = condition_set
        self.thresholds = thresholds
        self.cfg = cfg
        self.ledger = CoverageLedger(condition_set)
        self.cases: list[TestCase] = []
        self.loss = np.zeros((capacity, len(condition_set)), dtype=np.float64)
        self.min_loss = np.zeros(capacity, dtype=np.float64)
        self.adv = np.zeros(capacity, dtype=bool)
        self.novelty = np.zeros(capacity, dtype=np.int64)
        self.uses = np.zeros(capacity, dtype=np.int64)
        self.seed_count = 0
        self.generated_by_phase = {"random": 0, "targeted": 0}
        self.stall = 0
        self.exhausted: set[int] = set()
        self.rate_history: list[dict] = []

    @property
    def n_cases(self) -> int:
        return len(self.cases)

    @property
    def n_generated(self) -> int:
        return self.n_cases - self.seed_count

    def rate(self) -> float:
        return self.ledger.coverage_rate()

    def record_rates(self) -> None:
        self.rate_history.append(
            {
                "cases": self.n_cases,
                "generated": self.n_generated,
                "overall": self.rate(),
                "rates": self.ledger.metric_rates(),
            }
        )

    def refresh_min_losses(self) -> None:
        unfulfilled = self.ledger.unfulfilled_ids()
        n = self.n_cases
        if unfulfilled.size == 0:
            self.min_loss[:n] = np.inf
        else:
            self.min_loss[:n] = self.loss[:n, unfulfilled].min(axis=1)

    def append(self, case_input: InputSequence, origin_id: int, phase: str,
               trace=None) -> TestCase:
        case_id = self.n_cases
        if trace is None:
            trace = _run_model(self.model, case_input)
        sat, losses = self.conditions.evaluate_and_losses(trace)
        new_ids = self.ledger.update(np.flatnonzero(sat), case_id)

        origin = self.cases[origin_id] if origin_id != case_id else None
        distance = 0.0 if origin is None else input_distance(case_input, origin.input)
        case = TestCase(
            id=case_id,
            input=case_input,
            origin_id=origin_id,
            prediction=trace.prediction,
            distance_to_origin=distance,
            satisfied_new=tuple(new_ids),
        )
        if origin is not None:
            if oracle_check(case, origin, self.model, self.cfg):
                case = replace(case, adversarial=True)

        self.cases.append(case)
        self.loss[case_id] = losses
        self.adv[case_id] = case.adversarial
        self.novelty[case_id] = len(new_ids)
        if phase == "seed":
            self.seed_count += 1
        else:
            self.generated_by_phase[phase] += 1

        if new_ids:
            self.stall = 0
            self.exhausted.clear()
            self.refresh_min_losses()
        else:
            if phase != "seed":
                self.stall += 1
            unfulfilled = self.ledger.unfulfilled_ids()
            self.min_loss[case_id] = (
                np.inf if unfulfilled.size == 0 else float(losses[unfulfilled].min())
            )
        self.record_rates()
        return case

    def select_case_id(self) -> int:
        n = self.n_cases
        base = (
            self.cfg.weight_loss / (1.0 + self.min_loss[:n])
            + self.cfg.weight_adversarial * self.adv[:n]
            + self.cfg.weight_novelty * self.novelty[:n]
        )
        effective = base / (1.0 + self.uses[:n])
        pick = int(np.argmax(effective))  # ties resolve to the lowest id
        self.uses[pick] += 1
        return pick

    def budget_left(self) -> bool:
        return self.n_generated < self.cfg.max_cases

    def target_reached(self) -> bool:
        return self.rate() >= self.cfg.target_coverage_rate


def _evaluate_traces(model: ModelSpec, inputs: Sequence[InputSequence], workers: int):
    """Run the model over a batch, results in submission order."""
    if workers <= 1 or len(inputs) <= 1:
        return [_run_model(model, x) for x in inputs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda x: _run_model(model, x), inputs))


def run(
    model: ModelSpec,
    seeds: Sequence[InputSequence],
    thresholds: Thresholds,
    metrics: Sequence[MetricSpec] | None = None,
    fuzz_cfg: FuzzConfig | None = None,
    mutation_cfg: MutationConfig | None = None,
) -> tuple[Corpus, RunReport]:
    """Generate a test suite for the model, guided by coverage.

    Seeds are evaluated first and count toward coverage. Generation then
    loops select / mutate / evaluate / oracle-check until the target rate is
    reached or max_cases mutants exist. The whole run is deterministic for a
    fixed rng_seed: batch evaluation may fan out to worker threads, but
    results merge in submission order and every random draw comes from one
    generator owned by the coordinator.
    """
    started = time.monotonic()
    fuzz_cfg = fuzz_cfg or FuzzConfig()
    mutation_cfg = mutation_cfg or MutationConfig()
    metrics = tuple(metrics) if metrics is not None else default_metrics()
    if not seeds:
        raise FuzzError("at least one seed input is required")

    condition_set = ConditionSet(thresholds, metrics, model.n_steps)
    rng = np.random.default_rng(fuzz_cfg.rng_seed)
    state = _RunState(
        model, condition_set, thresholds, fuzz_cfg,
        capacity=len(seeds) + fuzz_cfg.max_cases,
    )

    seed_traces = _evaluate_traces(model, list(seeds), fuzz_cfg.worker_count)
    for k, (x, trace) in enumerate(zip(seeds, seed_traces)):
        state.append(x, origin_id=k, phase="seed", trace=trace)
    state.refresh_min_losses()
    state.stall = 0

    def generate_one_random() -> None:
        pick = state.select_case_id()
        parent = state.cases[pick]
        mutant = random_mutate(parent.input, mutation_cfg, rng)
        state.append(mutant, origin_id=parent.origin_id, phase="random")

    def targeted_burst(condition_id: int) -> None:
        cond = condition_set.conditions[condition_id]
        col = state.loss[: state.n_cases, condition_id]
        best_case = state.cases[int(np.argmin(col))]

        def on_candidate(mutant, trace, loss):
            state.append(
                mutant, origin_id=best_case.origin_id, phase="targeted", trace=trace
            )
            if not state.budget_left() or state.target_reached():
                raise _Stop

        try:
            targeted_mutate(
                best_case.input, cond, model, mutation_cfg,
                max_iters=fuzz_cfg.targeted_iters, thresholds=thresholds,
                rng=rng, on_candidate=on_candidate,
            )
        except _Stop:
            pass
        if state.ledger.hit_count[condition_id] == 0:
            state.exhausted.add(condition_id)
        # A burst, successful or not, buys the random phase another window
        # before the next one; pure targeting starves exploration.
        state.stall = 0

    def next_target() -> int | None:
        unfulfilled = [
            int(c) for c in state.ledger.unfulfilled_ids()
            if int(c) not in state.exhausted
        ]
        if not unfulfilled:
            return None
        # nearest condition first: its best observed loss is the smallest
        col = state.loss[: state.n_cases, unfulfilled].min(axis=0)
        return unfulfilled[int(np.argmin(col))]

    while state.budget_left() and not state.target_reached():
        targeting_open = (
            state.n_generated >= fuzz_cfg.random_phase_budget
            and state.stall >= fuzz_cfg.stall_window
        )
        if targeting_open:
            target = next_target()
            if target is not None:
                targeted_burst(target)
                continue
        generate_one_random()

    corpus = Corpus(cases=tuple(state.cases), seed_count=state.seed_count)

    # Stored adversarial flags must survive a fresh oracle pass.
    recheck = recompute_adversarial(corpus, model, fuzz_cfg)
    if tuple(corpus.adversarial_ids) != recheck:
        raise FuzzError("adversarial set failed re-verification")

    report = RunReport(
        config={
            "fuzz": fuzz_cfg.to_json(),
            "mutation": mutation_cfg.to_json(),
            "metrics": [m.key for m in metrics],
        },
        metric_keys=tuple(condition_set.metric_keys),
        seed_count=corpus.seed_count,
        generated_count=len(corpus.generated),
        conditions_total=len(condition_set),
        conditions_hit=int((state.ledger.hit_count > 0).sum()),
        final_rates=state.ledger.metric_rates(),
        overall_rate=state.rate(),
        rate_history=tuple(state.rate_history),
        adversary_rate=adversary_rate(corpus),
        adversarial_ids=corpus.adversarial_ids,
        generated_by_phase=dict(state.generated_by_phase),
        target_reached=state.target_reached(),
        coverage_times=tuple(tuple(r) for r in state.ledger.coverage_times()),
        wall_clock_seconds=time.monotonic() - started,
    )
    return corpus, report


# ── artifacts on disk ─────────────────────────────────────────────────────


def save_run(corpus: Corpus, report: RunReport, out_dir) -> dict:
    """Write corpus.jsonl, report.json, coverage_times.csv, adversarial.jsonl.

    Returns the path of each artifact keyed by name.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": out / "corpus.jsonl",
        "report": out / "report.json",
        "coverage_times": out / "coverage_times.csv",
        "adversarial": out / "adversarial.jsonl",
    }
    save_corpus(corpus, paths["corpus"])
    with open(paths["report"], "w") as fh:
        json.dump(report.to_json(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(paths["coverage_times"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "component", "abstraction", "t", "hit_count"])
        writer.writerows(report.coverage_times)
    with open(paths["adversarial"], "w") as fh:
        for case in corpus.cases:
            if case.adversarial:
                fh.write(json.dumps(case.to_json(), sort_keys=True) + "\n")
    return {k: str(v) for k, v in paths.items()}


def replay_report(corpus: Corpus, model: ModelSpec, thresholds: Thresholds,
                  metrics: Sequence[MetricSpec] | None = None,
                  fuzz_cfg: FuzzConfig | None = None,
                  worker_count: int = 1) -> RunReport:
    """Rebuild a report from a stored corpus by re-evaluating every case."""
    started = time.monotonic()
    fuzz_cfg = fuzz_cfg or FuzzConfig()
    metrics = tuple(metrics) if metrics is not None else default_metrics()
    condition_set = ConditionSet(thresholds, metrics, model.n_steps)
    ledger = CoverageLedger(condition_set)

    traces = _evaluate_traces(model, [c.input for c in corpus.cases], worker_count)
    history = []
    for case, trace in zip(corpus.cases, traces):
        ledger.update(condition_set.evaluate(trace), case.id)
        history.append(
            {
                "cases": case.id + 1,
                "generated": max(0, case.id + 1 - corpus.seed_count),
                "overall": ledger.coverage_rate(),
                "rates": ledger.metric_rates(),
            }
        )
    adversarial = recompute_adversarial(corpus, model, fuzz_cfg)
    generated = len(corpus.generated)
    return RunReport(
        config={"fuzz": fuzz_cfg.to_json(), "metrics": [m.key for m in metrics]},
        metric_keys=tuple(condition_set.metric_keys),
        seed_count=corpus.seed_count,
        generated_count=generated,
        conditions_total=len(condition_set),
        conditions_hit=int((ledger.hit_count > 0).sum()),
        final_rates=ledger.metric_rates(),
        overall_rate=ledger.coverage_rate(),
        rate_history=tuple(history),
        adversary_rate=(len(adversarial) / generated) if generated else 0.0,
        adversarial_ids=adversarial,
        generated_by_phase={},
        target_reached=ledger.coverage_rate() >= fuzz_cfg.target_coverage_rate,
        coverage_times=tuple(tuple(r) for r in ledger.coverage_times()),
        wall_clock_seconds=time.monotonic() - started,
    )
