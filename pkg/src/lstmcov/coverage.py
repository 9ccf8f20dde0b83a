"""Test conditions over trace abstractions and the coverage ledger.

Three metric families share one condition vocabulary:

* BC pins the extremes seen on training data: for every step t there is one
  "reach at least v_max" and one "reach at most v_min" condition per
  (component, abstraction) pair.
* SC asks for a large step-wise information change: delta at step t must
  reach v_sc, where v_sc is tau times the largest delta seen on training data.
* TC enumerates every symbolic word over a fixed step span; a trace satisfies
  exactly the word its own series spells.

Conditions get stable integer ids in a canonical enumeration order (metric,
component, abstraction, step, word), so ledgers and reports diff cleanly
across runs.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .abstraction import (
    ABSTRACTION_ORDER,
    COMPONENT_ORDER,
    Abstraction,
    Component,
    Symbolizer,
    fit_symbolizer,
    series_values,
    word_letters,
)
from .lstm_core import InputSequence, ModelSpec, Trace, apply_activation, run_model

METRICS = ("BC", "SC", "TC")
DEFAULT_TAU = 0.8
DEFAULT_ALPHABET_SIZE = 2
DEFAULT_TC_SPAN_LEN = 5
MAX_CONDITIONS = 10**6


class CoverageError(ValueError):
    pass


class EstimationError(CoverageError):
    pass


# ── metric selection ──────────────────────────────────────────────────────


@dataclass(frozen=True)
class MetricSpec:
    """One enabled metric instance, e.g. BC on (f, avg) or SC on h."""

    metric: str
    component: Component
    abstraction: Abstraction | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise CoverageError(f"unknown metric {self.metric!r}")
        comp = Component(self.component)
        object.__setattr__(self, "component", comp)
        if self.metric == "SC":
            if self.abstraction is not None:
                raise CoverageError("SC is defined on a component, not an abstraction")
        else:
            if self.abstraction is None:
                raise CoverageError(f"{self.metric} needs an abstraction")
            object.__setattr__(self, "abstraction", Abstraction(self.abstraction))

    @property
    def key(self) -> str:
        if self.metric == "SC":
            return f"SC:{self.component.value}"
        return f"{self.metric}:{self.component.value}:{self.abstraction.value}"

    def to_json(self) -> dict:
        d = {"metric": self.metric, "component": self.component.value}
        if self.abstraction is not None:
            d["abstraction"] = self.abstraction.value
        return d

    @classmethod
    def from_json(cls, d: dict) -> "MetricSpec":
        a = d.get("abstraction")
        return cls(
            metric=d["metric"],
            component=Component(d["component"]),
            abstraction=None if a is None else Abstraction(a),
        )


def default_metrics() -> tuple[MetricSpec, ...]:
    """The standard experiment set: BC on the forget-gate average, SC on h,
    TC on both signed h abstractions."""
    return (
        MetricSpec("BC", Component.F, Abstraction.AVERAGE),
        MetricSpec("SC", Component.H),
        MetricSpec("TC", Component.H, Abstraction.POSITIVE),
        MetricSpec("TC", Component.H, Abstraction.NEGATIVE),
    )


def _sort_key(spec: MetricSpec) -> tuple:
    a_idx = ABSTRACTION_ORDER.index(spec.abstraction) if spec.abstraction else -1
    return (METRICS.index(spec.metric), COMPONENT_ORDER.index(spec.component), a_idx)


# ── thresholds ────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Thresholds:
    """Everything estimation produces: BC bounds per (component, abstraction),
    SC bounds per component, fitted symbolizers, tau, and the TC span."""

    tau: float
    tc_span: tuple[int, int]
    bc: dict  # (Component, Abstraction) -> (v_max, v_min)
    v_sc: dict  # Component -> float
    symbolizers: dict  # (Component, Abstraction) -> Symbolizer

    def __post_init__(self):
        if not (0.0 < self.tau <= 1.0):
            raise CoverageError(f"tau must be in (0, 1], got {self.tau}")
        t1, t2 = self.tc_span
        if t1 < 1 or t2 < t1:
            raise CoverageError(f"bad tc_span [{t1}, {t2}]")
        for (s, a), (vmax, vmin) in self.bc.items():
            if vmax < vmin:
                raise CoverageError(
                    f"bc[{s.value}.{a.value}]: v_max {vmax} below v_min {vmin}"
                )
        for s, v in self.v_sc.items():
            if not v > 0:
                raise CoverageError(f"v_sc[{s.value}] must be positive, got {v}")

    def to_json(self) -> dict:
        return {
            "tau": self.tau,
            "tc_span": [self.tc_span[0], self.tc_span[1]],
            "bc": {
                f"{s.value}.{a.value}": {"v_max": vmax, "v_min": vmin}
                for (s, a), (vmax, vmin) in sorted(
                    self.bc.items(),
                    key=lambda kv: (COMPONENT_ORDER.index(kv[0][0]),
                                    ABSTRACTION_ORDER.index(kv[0][1])),
                )
            },
            "v_sc": {s.value: v for s, v in sorted(
                self.v_sc.items(), key=lambda kv: COMPONENT_ORDER.index(kv[0]))},
            "symbolizers": {
                f"{s.value}.{a.value}": sym.to_json()
                for (s, a), sym in sorted(
                    self.symbolizers.items(),
                    key=lambda kv: (COMPONENT_ORDER.index(kv[0][0]),
                                    ABSTRACTION_ORDER.index(kv[0][1])),
                )
            },
        }

    @classmethod
    def from_json(cls, d: dict) -> "Thresholds":
        def pair(key: str) -> tuple[Component, Abstraction]:
            s, a = key.split(".", 1)
            return (Component(s), Abstraction(a))

        return cls(
            tau=float(d["tau"]),
            tc_span=(int(d["tc_span"][0]), int(d["tc_span"][1])),
            bc={pair(k): (float(v["v_max"]), float(v["v_min"])) for k, v in d["bc"].items()},
            v_sc={Component(k): float(v) for k, v in d["v_sc"].items()},
            symbolizers={pair(k): Symbolizer.from_json(v) for k, v in d["symbolizers"].items()},
        )


def save_thresholds(th: Thresholds, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(th.to_json(), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_thresholds(path: str | Path) -> Thresholds:
    with open(path, "r", encoding="utf-8") as fh:
        return Thresholds.from_json(json.load(fh))


@dataclass(frozen=True)
class ThresholdConfig:
    tau: float = DEFAULT_TAU
    alphabet_size: int = DEFAULT_ALPHABET_SIZE
    tc_span: tuple[int, int] | None = None  # None: span of 5 steps centered
    metrics: tuple[MetricSpec, ...] = field(default_factory=default_metrics)

    def __post_init__(self):
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if not self.metrics:
            raise CoverageError("at least one metric is required")
        if not (0.0 < self.tau <= 1.0):
            raise CoverageError(f"tau must be in (0, 1], got {self.tau}")
        if self.alphabet_size < 2:
            raise CoverageError(f"alphabet_size must be >= 2, got {self.alphabet_size}")


def centered_span(n_steps: int, length: int = DEFAULT_TC_SPAN_LEN) -> tuple[int, int]:
    """A span of `length` consecutive steps centered in [1, n_steps]."""
    length = min(length, n_steps)
    t1 = (n_steps - length) // 2 + 1
    return (t1, t1 + length - 1)


def estimate_thresholds(
    model: ModelSpec,
    training_inputs: Sequence[InputSequence],
    config: ThresholdConfig | None = None,
) -> Thresholds:
    """Scan training traces for the extreme values the conditions will pin.

    BC bounds and symbolizer samples ignore the t=0 series entry; SC bounds
    come from the largest step-wise change anywhere in the scan.
    """
    config = config or ThresholdConfig()
    if not training_inputs:
        raise EstimationError("empty training set")
    span = config.tc_span or centered_span(model.n_steps)
    if span[1] > model.n_steps:
        raise EstimationError(f"tc_span {span} exceeds n_steps {model.n_steps}")

    bc_pairs = sorted(
        {(m.component, m.abstraction) for m in config.metrics if m.metric == "BC"},
        key=lambda p: (COMPONENT_ORDER.index(p[0]), ABSTRACTION_ORDER.index(p[1])),
    )
    sc_comps = sorted(
        {m.component for m in config.metrics if m.metric == "SC"},
        key=COMPONENT_ORDER.index,
    )
    tc_pairs = sorted(
        {(m.component, m.abstraction) for m in config.metrics if m.metric == "TC"},
        key=lambda p: (COMPONENT_ORDER.index(p[0]), ABSTRACTION_ORDER.index(p[1])),
    )

    bc_lo = {p: np.inf for p in bc_pairs}
    bc_hi = {p: -np.inf for p in bc_pairs}
    sc_max = {s: 0.0 for s in sc_comps}
    pool: dict = {p: [] for p in tc_pairs}

    series_pairs = set(bc_pairs) | set(tc_pairs)
    for s in sc_comps:
        series_pairs.add((s, Abstraction.POSITIVE))
        series_pairs.add((s, Abstraction.NEGATIVE))

    for x in training_inputs:
        trace = run_model(model, x)
        vals = {(s, a): series_values(trace, s, a) for (s, a) in series_pairs}
        for p in bc_pairs:
            body = vals[p][1:]
            lo, hi = float(body.min()), float(body.max())
            bc_lo[p] = min(bc_lo[p], lo)
            bc_hi[p] = max(bc_hi[p], hi)
        for s in sc_comps:
            d = np.abs(np.diff(vals[(s, Abstraction.POSITIVE)])) + np.abs(
                np.diff(vals[(s, Abstraction.NEGATIVE)])
            )
            sc_max[s] = max(sc_max[s], float(d.max()))
        for p in tc_pairs:
            pool[p].append(vals[p][span[0] : span[1] + 1])

    v_sc = {}
    for s in sc_comps:
        if not sc_max[s] > 0:
            raise EstimationError(
                f"degenerate training set: no step-wise change on component {s.value!r}"
            )
        v_sc[s] = config.tau * sc_max[s]

    symbolizers = {}
    for p in tc_pairs:
        samples = np.concatenate(pool[p])
        try:
            symbolizers[p] = fit_symbolizer(samples, config.alphabet_size)
        except Exception as e:
            raise EstimationError(
                f"cannot fit symbolizer for {p[0].value}.{p[1].value}: {e}"
            ) from e

    return Thresholds(
        tau=config.tau,
        tc_span=span,
        bc={p: (bc_hi[p], bc_lo[p]) for p in bc_pairs},
        v_sc=v_sc,
        symbolizers=symbolizers,
    )


# ── conditions ────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class BCUpper:
    component: Component
    abstraction: Abstraction
    t: int
    v_max: float
    id: int = -1

    kind = "bc_upper"
    metric = "BC"


@dataclass(frozen=True)
class BCLower:
    component: Component
    abstraction: Abstraction
    t: int
    v_min: float
    id: int = -1

    kind = "bc_lower"
    metric = "BC"


@dataclass(frozen=True)
class SCCondition:
    component: Component
    t: int
    v_sc: float
    id: int = -1

    kind = "sc"
    metric = "SC"
    abstraction = None


@dataclass(frozen=True)
class TCCondition:
    component: Component
    abstraction: Abstraction
    span: tuple[int, int]
    word: tuple[int, ...]
    id: int = -1

    kind = "tc"
    metric = "TC"


TestCondition = BCUpper | BCLower | SCCondition | TCCondition


def condition_metric_key(cond: TestCondition) -> str:
    if cond.metric == "SC":
        return f"SC:{cond.component.value}"
    return f"{cond.metric}:{cond.component.value}:{cond.abstraction.value}"


def build_conditions(
    thresholds: Thresholds,
    metric: str,
    component: Component,
    abstraction: Abstraction | None,
    n_steps: int,
    max_conditions: int = MAX_CONDITIONS,
) -> list[TestCondition]:
    """Enumerate one metric's conditions in canonical order (ids unset)."""
    out: list[TestCondition] = []
    if metric == "BC":
        try:
            vmax, vmin = thresholds.bc[(component, abstraction)]
        except KeyError:
            raise CoverageError(
                f"thresholds carry no BC bounds for {component.value}.{abstraction.value}"
            ) from None
        for t in range(1, n_steps + 1):
            out.append(BCUpper(component, abstraction, t, vmax))
        for t in range(1, n_steps + 1):
            out.append(BCLower(component, abstraction, t, vmin))
    elif metric == "SC":
        try:
            v = thresholds.v_sc[component]
        except KeyError:
            raise CoverageError(
                f"thresholds carry no SC bound for component {component.value!r}"
            ) from None
        for t in range(1, n_steps + 1):
            out.append(SCCondition(component, t, v))
    elif metric == "TC":
        try:
            sym = thresholds.symbolizers[(component, abstraction)]
        except KeyError:
            raise CoverageError(
                f"thresholds carry no symbolizer for {component.value}.{abstraction.value}"
            ) from None
        t1, t2 = thresholds.tc_span
        if t2 > n_steps:
            raise CoverageError(f"tc_span {thresholds.tc_span} exceeds n_steps {n_steps}")
        length = t2 - t1 + 1
        count = sym.alphabet_size**length
        if count > max_conditions:
            raise CoverageError(
                f"TC enumeration for {component.value}.{abstraction.value} needs "
                f"{count} conditions, cap is {max_conditions}"
            )
        for word in itertools.product(range(sym.alphabet_size), repeat=length):
            out.append(TCCondition(component, abstraction, (t1, t2), word))
    else:
        raise CoverageError(f"unknown metric {metric!r}")
    if len(out) > max_conditions:
        raise CoverageError(f"{len(out)} conditions exceed cap {max_conditions}")
    return out


class ConditionSet:
    """All conditions of a run with ids assigned and evaluation vectorized.

    Condition id equals its index. evaluate() returns the satisfied ids for
    one trace; losses() returns the per-condition rectified distance to
    satisfaction (0 exactly when satisfied, except TC where loss is the
    Hamming distance to the target word).
    """

    def __init__(self, thresholds: Thresholds, metrics: Sequence[MetricSpec], n_steps: int,
                 max_conditions: int = MAX_CONDITIONS):
        if not metrics:
            raise CoverageError("at least one metric is required")
        seen = set()
        ordered = sorted(metrics, key=_sort_key)
        conditions: list[TestCondition] = []
        for spec in ordered:
            if spec.key in seen:
                raise CoverageError(f"duplicate metric {spec.key}")
            seen.add(spec.key)
            conditions.extend(
                build_conditions(thresholds, spec.metric, spec.component,
                                 spec.abstraction, n_steps, max_conditions)
            )
        if len(conditions) > max_conditions:
            raise CoverageError(f"{len(conditions)} conditions exceed cap {max_conditions}")
        from dataclasses import replace

        self.thresholds = thresholds
        self.metrics = tuple(ordered)
        self.n_steps = n_steps
        self.conditions: list[TestCondition] = [
            replace(c, id=k) for k, c in enumerate(conditions)
        ]

        # gather which series / deltas / words a trace evaluation needs
        self._series_pairs: list[tuple[Component, Abstraction]] = []
        self._delta_comps: list[Component] = []
        self._word_pairs: list[tuple[Component, Abstraction]] = []
        for spec in ordered:
            if spec.metric == "BC":
                self._series_pairs.append((spec.component, spec.abstraction))
            elif spec.metric == "SC":
                self._delta_comps.append(spec.component)
            else:
                self._word_pairs.append((spec.component, spec.abstraction))

        # flat index arrays per condition kind, in id order
        ids = np.arange(len(self.conditions))
        self._bc_ids, self._bc_pair, self._bc_t, self._bc_bound, self._bc_upper = (
            [], [], [], [], [])
        self._sc_ids, self._sc_comp, self._sc_t, self._sc_bound = [], [], [], []
        tc_groups: dict[tuple[Component, Abstraction], list[TCCondition]] = {}
        for cond in self.conditions:
            if isinstance(cond, (BCUpper, BCLower)):
                self._bc_ids.append(cond.id)
                self._bc_pair.append(self._series_pairs.index((cond.component, cond.abstraction)))
                self._bc_t.append(cond.t)
                self._bc_bound.append(cond.v_max if isinstance(cond, BCUpper) else cond.v_min)
                self._bc_upper.append(isinstance(cond, BCUpper))
            elif isinstance(cond, SCCondition):
                self._sc_ids.append(cond.id)
                self._sc_comp.append(self._delta_comps.index(cond.component))
                self._sc_t.append(cond.t)
                self._sc_bound.append(cond.v_sc)
            else:
                tc_groups.setdefault((cond.component, cond.abstraction), []).append(cond)
        self._bc_ids = np.asarray(self._bc_ids, dtype=np.intp)
        self._bc_pair = np.asarray(self._bc_pair, dtype=np.intp)
        self._bc_t = np.asarray(self._bc_t, dtype=np.intp)
        self._bc_bound = np.asarray(self._bc_bound, dtype=np.float64)
        self._bc_upper = np.asarray(self._bc_upper, dtype=bool)
        self._sc_ids = np.asarray(self._sc_ids, dtype=np.intp)
        self._sc_comp = np.asarray(self._sc_comp, dtype=np.intp)
        self._sc_t = np.asarray(self._sc_t, dtype=np.intp)
        self._sc_bound = np.asarray(self._sc_bound, dtype=np.float64)
        self._tc_groups = []
        for pair, conds in tc_groups.items():
            words = np.asarray([c.word for c in conds], dtype=np.int16)
            gids = np.asarray([c.id for c in conds], dtype=np.intp)
            self._tc_groups.append((pair, gids, words))

        self._metric_ids = {}
        for cond in self.conditions:
            self._metric_ids.setdefault(condition_metric_key(cond), []).append(cond.id)
        self._metric_ids = {k: np.asarray(v, dtype=np.intp) for k, v in self._metric_ids.items()}

    def __len__(self) -> int:
        return len(self.conditions)

    @property
    def metric_keys(self) -> list[str]:
        return [m.key for m in self.metrics]

    def metric_condition_ids(self, key: str) -> np.ndarray:
        return self._metric_ids[key]

    def _trace_features(self, trace: Trace):
        if trace.n_steps != self.n_steps:
            raise CoverageError(
                f"trace has {trace.n_steps} steps, condition set expects {self.n_steps}"
            )
        cache: dict = {}

        def ser(pair):
            if pair not in cache:
                cache[pair] = series_values(trace, pair[0], pair[1])
            return cache[pair]

        series_mat = (
            np.stack([ser(p) for p in self._series_pairs]) if self._series_pairs else None
        )
        deltas = []
        for s in self._delta_comps:
            plus = ser((s, Abstraction.POSITIVE))
            minus = ser((s, Abstraction.NEGATIVE))
            deltas.append(np.abs(np.diff(plus)) + np.abs(np.diff(minus)))
        delta_mat = np.stack(deltas) if deltas else None
        words = {}
        t1, t2 = self.thresholds.tc_span
        for pair in self._word_pairs:
            sym = self.thresholds.symbolizers[pair]
            words[pair] = sym.symbols_of(ser(pair)[t1 : t2 + 1]).astype(np.int16)
        return series_mat, delta_mat, words

    def evaluate_and_losses(self, trace: Trace) -> tuple[np.ndarray, np.ndarray]:
        """One pass over a trace: (satisfied boolean vector, loss vector)."""
        series_mat, delta_mat, words = self._trace_features(trace)
        n = len(self.conditions)
        sat = np.zeros(n, dtype=bool)
        loss = np.zeros(n, dtype=np.float64)
        if self._bc_ids.size:
            vals = series_mat[self._bc_pair, self._bc_t]
            up = self._bc_upper
            sat_bc = np.where(up, vals >= self._bc_bound, vals <= self._bc_bound)
            loss_bc = np.where(up, self._bc_bound - vals, vals - self._bc_bound)
            sat[self._bc_ids] = sat_bc
            loss[self._bc_ids] = np.maximum(loss_bc, 0.0)
        if self._sc_ids.size:
            vals = delta_mat[self._sc_comp, self._sc_t - 1]
            sat[self._sc_ids] = vals >= self._sc_bound
            loss[self._sc_ids] = np.maximum(self._sc_bound - vals, 0.0)
        for pair, gids, word_mat in self._tc_groups:
            observed = words[pair]
            ham = (word_mat != observed[None, :]).sum(axis=1)
            sat[gids] = ham == 0
            loss[gids] = ham.astype(np.float64)
        return sat, loss

    def evaluate(self, trace: Trace) -> np.ndarray:
        """Ids of the conditions this trace satisfies."""
        sat, _ = self.evaluate_and_losses(trace)
        return np.flatnonzero(sat)


def evaluate_trace(condition_set: ConditionSet, trace: Trace) -> frozenset[int]:
    return frozenset(int(i) for i in condition_set.evaluate(trace))


# ── ledger ────────────────────────────────────────────────────────────────


class CoverageLedger:
    """Hit counts and first-hit attribution per condition."""

    def __init__(self, condition_set: ConditionSet):
        self.condition_set = condition_set
        self.hit_count = np.zeros(len(condition_set), dtype=np.int64)
        self.first_hit: list[int | None] = [None] * len(condition_set)

    def update(self, satisfied_ids: Iterable[int], case_id: int) -> list[int]:
        """Record one case's satisfied conditions; returns the newly hit ids."""
        new = []
        for raw in satisfied_ids:
            cid = int(raw)
            if self.hit_count[cid] == 0:
                self.first_hit[cid] = case_id
                new.append(cid)
            self.hit_count[cid] += 1
        return new

    def coverage_rate(self) -> float:
        return float((self.hit_count > 0).mean())

    def metric_rates(self) -> dict[str, float]:
        out = {}
        for key in self.condition_set.metric_keys:
            ids = self.condition_set.metric_condition_ids(key)
            out[key] = float((self.hit_count[ids] > 0).mean())
        return out

    def unfulfilled_ids(self) -> np.ndarray:
        return np.flatnonzero(self.hit_count == 0)

    def coverage_times(self) -> list[tuple[str, str, str, int, int]]:
        """Hit counts grouped by step: rows (metric, component, abstraction, t, hits).

        BC upper and lower hits at the same step are summed; TC hits are
        aggregated over words and reported at the span's first step.
        """
        agg: dict[tuple[str, str, str, int], int] = {}
        for cond in self.condition_set.conditions:
            a = "" if cond.abstraction is None else cond.abstraction.value
            t = cond.span[0] if isinstance(cond, TCCondition) else cond.t
            k = (cond.metric, cond.component.value, a, t)
            agg[k] = agg.get(k, 0) + int(self.hit_count[cond.id])
        return [(m, s, a, t, n) for (m, s, a, t), n in sorted(agg.items())]

    def report_rows(self) -> list[dict]:
        rows = []
        for cond in self.condition_set.conditions:
            row = {
                "id": cond.id,
                "kind": cond.kind,
                "metric": condition_metric_key(cond),
                "component": cond.component.value,
                "abstraction": None if cond.abstraction is None else cond.abstraction.value,
                "hit_count": int(self.hit_count[cond.id]),
                "first_hit": self.first_hit[cond.id],
            }
            if isinstance(cond, TCCondition):
                row["span"] = [cond.span[0], cond.span[1]]
                row["word"] = word_letters(cond.word)
            else:
                row["t"] = cond.t
                if isinstance(cond, BCUpper):
                    row["bound"] = cond.v_max
                elif isinstance(cond, BCLower):
                    row["bound"] = cond.v_min
                else:
                    row["bound"] = cond.v_sc
            rows.append(row)
        return rows


# ── baseline metric ───────────────────────────────────────────────────────


def neuron_coverage(model: ModelSpec, traces: Sequence[Trace], threshold: float = 0.0) -> float:
    """Fraction of output-side dense neurons whose pre-activation exceeded
    threshold on at least one trace.

    Dense layers ahead of the LSTM are not counted: a Trace records the LSTM
    internals and final output, not the raw step inputs, so only the layers
    reachable from the final hidden state can be re-activated here.
    """
    sizes = [l.out_dim for l in model.post_layers]
    covered = [np.zeros(n, dtype=bool) for n in sizes]
    for trace in traces:
        v = trace.steps[-1].h
        for k, layer in enumerate(model.post_layers):
            z = layer.weights @ v + layer.bias
            covered[k] |= z > threshold
            v = apply_activation(layer.activation, z)
    total = sum(sizes)
    if total == 0:
        raise CoverageError("model has no dense post-layers")
    return float(sum(int(c.sum()) for c in covered) / total)
