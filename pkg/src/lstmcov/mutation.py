"""Input mutation and coverage-targeted search.

Continuous inputs get i.i.d. Gaussian noise clipped back into the clamp
interval. Token inputs get one of the classic lightweight text-editing ops
(substitute from a user table, insert, swap, delete), all length-preserving
by shifting against the pad token. An external command can be plugged in as
an extra "equivalence" op for domains with their own notion of
semantics-preserving variants: it receives one serialized input on stdin and
prints newline-delimited variants.

targeted_mutate is a greedy hill-climb on a single condition's loss: propose
a random mutant of the best input so far, keep it only if the loss strictly
drops, stop at zero loss or after max_iters proposals.
"""

from __future__ import annotations

import json
import logging
import subprocess
from dataclasses import dataclass, field

import numpy as np

from .abstraction import Abstraction, series, series_values, symbolize
from .coverage import (
    BCLower,
    BCUpper,
    SCCondition,
    TCCondition,
    TestCondition,
    Thresholds,
)
from .lstm_core import (
    ContinuousInput,
    InputSequence,
    ModelSpec,
    TokenInput,
    Trace,
    input_from_json,
    input_to_json,
    run_model,
)

logger = logging.getLogger(__name__)

TOKEN_OPS = ("substitute", "insert", "swap", "delete")
EQUIVALENCE_OP = "equivalence"
DEFAULT_SIGMA_FRACTION = 0.05
DEFAULT_MAX_ITERS = 100


class MutationError(ValueError):
    pass


@dataclass(frozen=True)
class MutationConfig:
    """Knobs for random_mutate. gaussian_sigma None means 5% of the clamp
    range, resolved per input."""

    gaussian_sigma: float | None = None
    token_ops: tuple[str, ...] = TOKEN_OPS
    substitution_table: dict | None = None  # token id -> sequence of token ids
    equivalence_command: tuple[str, ...] | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.gaussian_sigma is not None and not self.gaussian_sigma > 0:
            raise MutationError(f"gaussian_sigma must be positive, got {self.gaussian_sigma}")
        ops = tuple(self.token_ops)
        for op in ops:
            if op not in TOKEN_OPS + (EQUIVALENCE_OP,):
                raise MutationError(f"unknown token op {op!r}")
        if not ops:
            raise MutationError("token_ops must not be empty")
        if EQUIVALENCE_OP in ops and self.equivalence_command is None:
            raise MutationError("'equivalence' op requires equivalence_command")
        object.__setattr__(self, "token_ops", ops)
        if self.substitution_table is not None:
            table = {int(k): tuple(int(v) for v in vs)
                     for k, vs in self.substitution_table.items()}
            object.__setattr__(self, "substitution_table", table)
        if self.equivalence_command is not None:
            object.__setattr__(self, "equivalence_command",
                               tuple(str(a) for a in self.equivalence_command))

    def resolve_sigma(self, clamp: tuple[float, float]) -> float:
        if self.gaussian_sigma is not None:
            return self.gaussian_sigma
        return DEFAULT_SIGMA_FRACTION * (clamp[1] - clamp[0])

    def to_json(self) -> dict:
        return {
            "gaussian_sigma": self.gaussian_sigma,
            "token_ops": list(self.token_ops),
            "substitution_table": (
                None if self.substitution_table is None
                else {str(k): list(v) for k, v in self.substitution_table.items()}
            ),
            "equivalence_command": (
                None if self.equivalence_command is None else list(self.equivalence_command)
            ),
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_json(cls, d: dict) -> "MutationConfig":
        return cls(
            gaussian_sigma=d.get("gaussian_sigma"),
            token_ops=tuple(d.get("token_ops", TOKEN_OPS)),
            substitution_table=d.get("substitution_table"),
            equivalence_command=(
                tuple(d["equivalence_command"]) if d.get("equivalence_command") else None
            ),
            rng_seed=int(d.get("rng_seed", 0)),
        )


# ── random mutation ───────────────────────────────────────────────────────


def _mutate_continuous(x: ContinuousInput, cfg: MutationConfig,
                       rng: np.random.Generator) -> ContinuousInput:
    sigma = cfg.resolve_sigma(x.clamp)
    noise = rng.normal(0.0, sigma, x.values.shape)
    values = np.clip(x.values + noise, x.clamp[0], x.clamp[1])
    return ContinuousInput(values=values, clamp=x.clamp)


def _substitute(x: TokenInput, cfg: MutationConfig, rng: np.random.Generator) -> TokenInput | None:
    table = cfg.substitution_table or {}
    positions = [p for p, t in enumerate(x.ids) if table.get(t)]
    if not positions:
        return None
    p = positions[int(rng.integers(len(positions)))]
    options = table[x.ids[p]]
    new = options[int(rng.integers(len(options)))]
    ids = list(x.ids)
    ids[p] = new
    return TokenInput(ids=tuple(ids), vocab_size=x.vocab_size, pad_id=x.pad_id)


def _random_non_pad_token(x: TokenInput, rng: np.random.Generator) -> int:
    if x.vocab_size <= 1:
        return x.pad_id
    draw = int(rng.integers(x.vocab_size - 1))
    return draw if draw < x.pad_id else draw + 1


def _insert(x: TokenInput, cfg: MutationConfig, rng: np.random.Generator) -> TokenInput:
    n = len(x.ids)
    p = int(rng.integers(n))
    tok = _random_non_pad_token(x, rng)
    ids = list(x.ids[:p]) + [tok] + list(x.ids[p : n - 1])
    return TokenInput(ids=tuple(ids), vocab_size=x.vocab_size, pad_id=x.pad_id)


def _swap(x: TokenInput, cfg: MutationConfig, rng: np.random.Generator) -> TokenInput:
    n = len(x.ids)
    p = int(rng.integers(n))
    q = int(rng.integers(n))
    ids = list(x.ids)
    ids[p], ids[q] = ids[q], ids[p]
    return TokenInput(ids=tuple(ids), vocab_size=x.vocab_size, pad_id=x.pad_id)


def _delete(x: TokenInput, cfg: MutationConfig, rng: np.random.Generator) -> TokenInput:
    n = len(x.ids)
    p = int(rng.integers(n))
    ids = list(x.ids[:p]) + list(x.ids[p + 1 :]) + [x.pad_id]
    return TokenInput(ids=tuple(ids), vocab_size=x.vocab_size, pad_id=x.pad_id)


def run_equivalence_command(x: InputSequence, cfg: MutationConfig,
                            rng: np.random.Generator) -> InputSequence:
    """Ask the configured external command for variants and pick one.

    Contract: the command reads one serialized input (a JSON object on a
    single line) from stdin and writes k >= 1 variants, one JSON object per
    line, to stdout.
    """
    if cfg.equivalence_command is None:
        raise MutationError("no equivalence_command configured")
    payload = json.dumps(input_to_json(x), sort_keys=True) + "\n"
    try:
        proc = subprocess.run(
            list(cfg.equivalence_command), input=payload, capture_output=True,
            text=True, timeout=30, check=True,
        )
    except subprocess.CalledProcessError as e:
        raise MutationError(
            f"equivalence command failed with code {e.returncode}: {e.stderr.strip()}"
        ) from e
    except subprocess.TimeoutExpired as e:
        raise MutationError("equivalence command timed out") from e
    variants = []
    for line in proc.stdout.splitlines():
        line = line.strip()
        if not line:
            continue
        variants.append(input_from_json(json.loads(line)))
    if not variants:
        raise MutationError("equivalence command produced no variants")
    pick = variants[int(rng.integers(len(variants)))]
    if pick.n_steps != x.n_steps:
        raise MutationError(
            f"equivalence variant has {pick.n_steps} steps, expected {x.n_steps}"
        )
    return pick


def random_mutate(x: InputSequence, cfg: MutationConfig,
                  rng: np.random.Generator) -> InputSequence:
    """One random mutant of x. Always returns a structurally valid input of
    the same length, kind, and vocabulary/clamp."""
    if isinstance(x, ContinuousInput):
        if cfg.equivalence_command is not None and EQUIVALENCE_OP in cfg.token_ops:
            if int(rng.integers(2)) == 1:
                return run_equivalence_command(x, cfg, rng)
        return _mutate_continuous(x, cfg, rng)

    ops = list(cfg.token_ops)
    op = ops[int(rng.integers(len(ops)))]
    if op == "substitute":
        mutant = _substitute(x, cfg, rng)
        if mutant is not None:
            return mutant
        rest = [o for o in ops if o != "substitute"] or ["swap"]
        op = rest[int(rng.integers(len(rest)))]
        logger.debug("substitute had no table entry; fell back to %s", op)
    if op == "insert":
        return _insert(x, cfg, rng)
    if op == "swap":
        return _swap(x, cfg, rng)
    if op == "delete":
        return _delete(x, cfg, rng)
    if op == EQUIVALENCE_OP:
        return run_equivalence_command(x, cfg, rng)
    raise MutationError(f"unknown op {op!r}")


# ── coverage loss ─────────────────────────────────────────────────────────


def coverage_loss(condition: TestCondition, trace: Trace, thresholds: Thresholds) -> float:
    """Rectified distance from a trace to satisfying one condition.

    Zero exactly when the condition is satisfied. BC and SC losses are the
    linear shortfall; TC loss is the Hamming distance between the observed
    word and the target word.
    """
    if isinstance(condition, BCUpper):
        val = series_values(trace, condition.component, condition.abstraction)[condition.t]
        return max(0.0, condition.v_max - float(val))
    if isinstance(condition, BCLower):
        val = series_values(trace, condition.component, condition.abstraction)[condition.t]
        return max(0.0, float(val) - condition.v_min)
    if isinstance(condition, SCCondition):
        plus = series_values(trace, condition.component, Abstraction.POSITIVE)
        minus = series_values(trace, condition.component, Abstraction.NEGATIVE)
        t = condition.t
        d = abs(plus[t] - plus[t - 1]) + abs(minus[t] - minus[t - 1])
        return max(0.0, condition.v_sc - float(d))
    if isinstance(condition, TCCondition):
        pair = (condition.component, condition.abstraction)
        try:
            sym = thresholds.symbolizers[pair]
        except KeyError:
            raise MutationError(
                f"thresholds carry no symbolizer for {pair[0].value}.{pair[1].value}"
            ) from None
        word = symbolize(series(trace, *pair), sym, condition.span)
        return float(sum(a != b for a, b in zip(word.symbols, condition.word)))
    raise MutationError(f"unknown condition type {type(condition).__name__}")


@dataclass(frozen=True)
class CoverageLoss:
    """A condition's loss bound to its thresholds, callable on traces."""

    condition: TestCondition
    thresholds: Thresholds

    def __call__(self, trace: Trace) -> float:
        return coverage_loss(self.condition, trace, self.thresholds)


# ── targeted mutation ─────────────────────────────────────────────────────


def targeted_mutate(
    x_best: InputSequence,
    condition: TestCondition,
    model: ModelSpec,
    cfg: MutationConfig,
    max_iters: int = DEFAULT_MAX_ITERS,
    thresholds: Thresholds | None = None,
    rng: np.random.Generator | None = None,
    on_candidate=None,
) -> InputSequence:
    """Greedy descent on one condition's coverage loss.

    Proposes random mutants of the current best input and accepts only strict
    loss improvements. Returns the best input found; stops early the moment
    the loss hits zero (including before the first proposal). on_candidate,
    when given, observes every proposal as (input, trace, loss).
    """
    if thresholds is None:
        raise MutationError("targeted_mutate needs the thresholds the condition came from")
    if max_iters < 0:
        raise MutationError(f"max_iters must be >= 0, got {max_iters}")
    rng = rng or np.random.default_rng(cfg.rng_seed)
    loss_fn = CoverageLoss(condition, thresholds)

    best = x_best
    best_loss = loss_fn(run_model(model, best))
    if best_loss == 0.0:
        return best
    for _ in range(max_iters):
        cand = random_mutate(best, cfg, rng)
        trace = run_model(model, cand)
        cand_loss = loss_fn(trace)
        if on_candidate is not None:
            on_candidate(cand, trace, cand_loss)
        if cand_loss < best_loss:
            best, best_loss = cand, cand_loss
            if best_loss == 0.0:
                break
    return best
