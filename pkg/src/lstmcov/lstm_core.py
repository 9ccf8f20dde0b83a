"""Canonical LSTM model format and traced forward execution.

A model is a chain ``pre_layers -> lstm -> post_layers`` applied to a
fixed-length input sequence: the dense pre-layers run on every step's input
vector, the single LSTM layer consumes the resulting sequence from a zero
initial state, and the dense post-layers map the final hidden state to the
model output. Running a model records every gate and state vector at every
step; those traces are what the coverage metrics consume.

The module also owns the on-disk formats shared across the toolchain: the
model JSON schema (format_version 1) and the JSON-lines seed record format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

FORMAT_VERSION = 1
ACTIVATIONS = ("linear", "relu", "sigmoid", "tanh", "softmax")
GATE_NAMES = ("forget", "input", "candidate", "output")
TASKS = ("classification", "regression")
INPUT_KINDS = ("continuous", "token")


class ModelError(ValueError):
    """A model file or ModelSpec violates the format contract."""


class ShapeError(ModelError):
    """Dimension mismatch; the message names the offending arrays."""


class NumericError(ArithmeticError):
    """A non-finite value appeared while running a model."""


class InputError(ValueError):
    """An input sequence is malformed or incompatible with the model."""


# ── numerics ──────────────────────────────────────────────────────────────


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function, split by sign so exp never overflows."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return np.asarray(z, dtype=np.float64)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "tanh":
        return np.tanh(z)
    if name == "softmax":
        return softmax(z)
    raise ModelError(f"unknown activation {name!r}")


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


# ── input sequences ───────────────────────────────────────────────────────


@dataclass(frozen=True)
class ContinuousInput:
    """Fixed-length sequence of real vectors, each entry within clamp."""

    values: np.ndarray  # (n_steps, dim)
    clamp: tuple[float, float] = (0.0, 1.0)

    kind = "continuous"

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2:
            raise InputError(f"continuous values must be 2-d, got ndim={v.ndim}")
        lo, hi = float(self.clamp[0]), float(self.clamp[1])
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
            raise InputError(f"bad clamp interval [{lo}, {hi}]")
        if not np.isfinite(v).all():
            raise InputError("continuous values contain non-finite entries")
        if v.size and (v.min() < lo or v.max() > hi):
            raise InputError(
                f"values outside clamp [{lo}, {hi}]: "
                f"range [{v.min()}, {v.max()}]"
            )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "clamp", (lo, hi))

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class TokenInput:
    """Fixed-length sequence of token ids below vocab_size."""

    ids: tuple[int, ...]
    vocab_size: int
    pad_id: int = 0

    kind = "token"

    def __post_init__(self):
        ids = tuple(int(t) for t in self.ids)
        if self.vocab_size < 1:
            raise InputError(f"vocab_size must be >= 1, got {self.vocab_size}")
        if not (0 <= self.pad_id < self.vocab_size):
            raise InputError(f"pad_id {self.pad_id} outside vocab [0, {self.vocab_size})")
        for pos, t in enumerate(ids):
            if not (0 <= t < self.vocab_size):
                raise InputError(
                    f"token id {t} at position {pos} outside vocab [0, {self.vocab_size})"
                )
        object.__setattr__(self, "ids", ids)

    @property
    def n_steps(self) -> int:
        return len(self.ids)


InputSequence = ContinuousInput | TokenInput


def input_to_json(x: InputSequence) -> dict:
    if isinstance(x, ContinuousInput):
        return {
            "kind": "continuous",
            "values": [row.tolist() for row in x.values],
            "clamp": [x.clamp[0], x.clamp[1]],
        }
    return {
        "kind": "token",
        "ids": list(x.ids),
        "vocab_size": x.vocab_size,
        "pad_id": x.pad_id,
    }


def input_from_json(d: dict) -> InputSequence:
    kind = d.get("kind")
    if kind == "continuous":
        return ContinuousInput(
            values=np.asarray(d["values"], dtype=np.float64),
            clamp=(float(d["clamp"][0]), float(d["clamp"][1])),
        )
    if kind == "token":
        return TokenInput(
            ids=tuple(int(t) for t in d["ids"]),
            vocab_size=int(d["vocab_size"]),
            pad_id=int(d.get("pad_id", 0)),
        )
    raise InputError(f"unknown input kind {kind!r}")


@dataclass(frozen=True)
class SeedRecord:
    """One line of a seeds or training JSON-lines file."""

    input: InputSequence
    label: int | float | None = None


def load_seed_records(path: str | Path) -> list[SeedRecord]:
    """Read a JSON-lines seed file. Blank lines and '#' comments are skipped."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                d = json.loads(stripped)
            except json.JSONDecodeError as e:
                raise InputError(f"{path}:{lineno}: bad JSON ({e})") from e
            if "input" not in d:
                raise InputError(f"{path}:{lineno}: missing 'input' field")
            records.append(SeedRecord(input=input_from_json(d["input"]), label=d.get("label")))
    return records


def save_seed_records(records: Iterable[SeedRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(
                {"input": input_to_json(rec.input), "label": rec.label},
                sort_keys=True, separators=(",", ":"),
            ))
            fh.write("\n")


# ── model parameters ──────────────────────────────────────────────────────


@dataclass(frozen=True)
class GateWeights:
    """Affine map for one gate: w_input @ x + w_hidden @ h + bias."""

    w_input: np.ndarray   # (units, input_dim)
    w_hidden: np.ndarray  # (units, units)
    bias: np.ndarray      # (units,)

    def __post_init__(self):
        object.__setattr__(self, "w_input", _frozen(self.w_input))
        object.__setattr__(self, "w_hidden", _frozen(self.w_hidden))
        object.__setattr__(self, "bias", _frozen(self.bias))


@dataclass(frozen=True)
class LstmLayerParams:
    units: int
    input_dim: int
    forget: GateWeights
    input: GateWeights
    candidate: GateWeights
    output: GateWeights

    def gate(self, name: str) -> GateWeights:
        if name not in GATE_NAMES:
            raise ModelError(f"unknown gate {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class DenseLayerParams:
    weights: np.ndarray  # (out_dim, in_dim), applied as weights @ v + bias
    bias: np.ndarray     # (out_dim,)
    activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "bias", _frozen(self.bias))

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class ModelSpec:
    """A validated model: dense pre-layers, one LSTM layer, dense post-layers."""

    n_steps: int
    task: str
    input_kind: str
    lstm: LstmLayerParams
    post_layers: tuple[DenseLayerParams, ...]
    pre_layers: tuple[DenseLayerParams, ...] = ()
    token_embedding: np.ndarray | None = None  # (vocab, dim)

    def __post_init__(self):
        object.__setattr__(self, "pre_layers", tuple(self.pre_layers))
        object.__setattr__(self, "post_layers", tuple(self.post_layers))
        if self.token_embedding is not None:
            object.__setattr__(self, "token_embedding", _frozen(self.token_embedding))
        validate_model(self)

    @property
    def input_dim(self) -> int:
        """Dimension of the raw per-step input vector (before pre_layers)."""
        if self.pre_layers:
            return self.pre_layers[0].in_dim
        return self.lstm.input_dim

    @property
    def vocab_size(self) -> int:
        if self.token_embedding is None:
            raise ModelError("model has no token embedding")
        return self.token_embedding.shape[0]

    @property
    def output_dim(self) -> int:
        return self.post_layers[-1].out_dim


def _check_finite_field(arr: np.ndarray, name: str) -> None:
    if not np.isfinite(arr).all():
        raise ModelError(f"non-finite weight in {name}")


def _check_gate(gate: GateWeights, name: str, units: int, input_dim: int) -> None:
    if gate.w_input.shape != (units, input_dim):
        raise ShapeError(
            f"lstm.{name}.w_input has shape {gate.w_input.shape}, "
            f"expected ({units}, {input_dim})"
        )
    if gate.w_hidden.shape != (units, units):
        raise ShapeError(
            f"lstm.{name}.w_hidden has shape {gate.w_hidden.shape}, "
            f"expected ({units}, {units})"
        )
    if gate.bias.shape != (units,):
        raise ShapeError(
            f"lstm.{name}.bias has shape {gate.bias.shape}, expected ({units},)"
        )
    _check_finite_field(gate.w_input, f"lstm.{name}.w_input")
    _check_finite_field(gate.w_hidden, f"lstm.{name}.w_hidden")
    _check_finite_field(gate.bias, f"lstm.{name}.bias")


def validate_model(m: ModelSpec) -> None:
    """Check every structural invariant; raise ModelError naming the field."""
    if m.n_steps < 1:
        raise ModelError(f"n_steps must be >= 1, got {m.n_steps}")
    if m.task not in TASKS:
        raise ModelError(f"task must be one of {TASKS}, got {m.task!r}")
    if m.input_kind not in INPUT_KINDS:
        raise ModelError(f"input_kind must be one of {INPUT_KINDS}, got {m.input_kind!r}")
    if m.lstm.units < 1:
        raise ModelError(f"lstm.units must be >= 1, got {m.lstm.units}")
    if m.lstm.input_dim < 1:
        raise ModelError(f"lstm.input_dim must be >= 1, got {m.lstm.input_dim}")
    for g in GATE_NAMES:
        _check_gate(m.lstm.gate(g), g, m.lstm.units, m.lstm.input_dim)

    if not m.post_layers:
        raise ModelError("post_layers must not be empty")

    # dimension chain: raw input -> pre_layers -> lstm -> post_layers
    dim = m.pre_layers[0].in_dim if m.pre_layers else m.lstm.input_dim
    for idx, layer in enumerate(m.pre_layers):
        name = f"pre_layers[{idx}]"
        if layer.activation not in ACTIVATIONS:
            raise ModelError(f"{name}.activation {layer.activation!r} is not valid")
        if layer.bias.shape != (layer.out_dim,):
            raise ShapeError(f"{name}.bias has shape {layer.bias.shape}, expected ({layer.out_dim},)")
        if layer.in_dim != dim:
            raise ShapeError(f"{name} expects input dim {layer.in_dim}, chain provides {dim}")
        _check_finite_field(layer.weights, f"{name}.weights")
        _check_finite_field(layer.bias, f"{name}.bias")
        dim = layer.out_dim
    if m.lstm.input_dim != dim:
        raise ShapeError(f"lstm.input_dim is {m.lstm.input_dim}, chain provides {dim}")

    dim = m.lstm.units
    for idx, layer in enumerate(m.post_layers):
        name = f"post_layers[{idx}]"
        if layer.activation not in ACTIVATIONS:
            raise ModelError(f"{name}.activation {layer.activation!r} is not valid")
        if layer.bias.shape != (layer.out_dim,):
            raise ShapeError(f"{name}.bias has shape {layer.bias.shape}, expected ({layer.out_dim},)")
        if layer.in_dim != dim:
            raise ShapeError(f"{name} expects input dim {layer.in_dim}, chain provides {dim}")
        _check_finite_field(layer.weights, f"{name}.weights")
        _check_finite_field(layer.bias, f"{name}.bias")
        dim = layer.out_dim

    # softmax is an output-distribution activation: final position only
    all_layers = [(f"pre_layers[{k}]", l) for k, l in enumerate(m.pre_layers)]
    all_layers += [(f"post_layers[{k}]", l) for k, l in enumerate(m.post_layers)]
    for name, layer in all_layers[:-1]:
        if layer.activation == "softmax":
            raise ModelError(f"{name} uses softmax but is not the final layer")
    final_act = m.post_layers[-1].activation
    if m.task == "classification" and final_act != "softmax":
        raise ModelError(
            f"classification model must end in softmax, post_layers[-1] uses {final_act!r}"
        )
    if m.task == "regression" and final_act == "softmax":
        raise ModelError("regression model must not end in softmax")

    if m.input_kind == "token":
        if m.token_embedding is None:
            raise ModelError("input_kind is 'token' but token_embedding is missing")
        emb = m.token_embedding
        if emb.ndim != 2 or emb.shape[0] < 1:
            raise ShapeError(f"token_embedding has shape {emb.shape}, expected (vocab, dim)")
        want = m.pre_layers[0].in_dim if m.pre_layers else m.lstm.input_dim
        if emb.shape[1] != want:
            raise ShapeError(
                f"token_embedding dim {emb.shape[1]} does not match model input dim {want}"
            )
        _check_finite_field(emb, "token_embedding")
    elif m.token_embedding is not None:
        raise ModelError("continuous model must not carry a token_embedding")


# ── traces ────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class StepTrace:
    """All five internal vectors of one LSTM step (t is 1-based)."""

    t: int
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    c: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        for name in ("f", "i", "o", "c", "h"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class Trace:
    """Full record of one model run: per-step internals, output, prediction."""

    steps: tuple[StepTrace, ...]
    output: np.ndarray
    prediction: int | float

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "output", _frozen(self.output))

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def units(self) -> int:
        return self.steps[0].h.shape[0]

    def component_matrix(self, name: str) -> np.ndarray:
        """Stack one component over time: row t-1 holds the vector at step t."""
        return np.stack([getattr(s, name) for s in self.steps])


def lstm_cell_step(
    params: LstmLayerParams,
    x_t: np.ndarray,
    c_prev: np.ndarray,
    h_prev: np.ndarray,
    t: int = 1,
) -> StepTrace:
    """One LSTM cell update, returning every internal vector.

    f, i, o are logistic gates over the shared [h_prev, x_t] affine maps,
    c = f * c_prev + i * tanh(candidate), h = o * tanh(c).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x_t.shape != (params.input_dim,):
        raise ShapeError(f"x_t has shape {x_t.shape}, lstm.input_dim is {params.input_dim}")
    if c_prev.shape != (params.units,):
        raise ShapeError(f"c_prev has shape {c_prev.shape}, lstm.units is {params.units}")
    if h_prev.shape != (params.units,):
        raise ShapeError(f"h_prev has shape {h_prev.shape}, lstm.units is {params.units}")

    def pre(g: GateWeights) -> np.ndarray:
        return g.w_input @ x_t + g.w_hidden @ h_prev + g.bias

    f = sigmoid(pre(params.forget))
    i = sigmoid(pre(params.input))
    g = np.tanh(pre(params.candidate))
    c = f * c_prev + i * g
    o = sigmoid(pre(params.output))
    h = o * np.tanh(c)
    return StepTrace(t=t, f=f, i=i, o=o, c=c, h=h)


def _embed(model: ModelSpec, x: InputSequence) -> np.ndarray:
    """Turn an input sequence into the (n_steps, input_dim) matrix of step vectors."""
    if x.n_steps != model.n_steps:
        raise InputError(f"input has {x.n_steps} steps, model expects {model.n_steps}")
    if isinstance(x, TokenInput):
        if model.input_kind != "token":
            raise InputError("token input given to a continuous model")
        emb = model.token_embedding
        if x.vocab_size > emb.shape[0]:
            raise InputError(
                f"input vocab_size {x.vocab_size} exceeds embedding vocab {emb.shape[0]}"
            )
        return emb[np.asarray(x.ids, dtype=np.intp)]
    if model.input_kind != "continuous":
        raise InputError("continuous input given to a token model")
    if x.values.shape[1] != model.input_dim:
        raise InputError(
            f"input vectors have dim {x.values.shape[1]}, model expects {model.input_dim}"
        )
    return x.values


def _first_bad_step(mat: np.ndarray) -> int:
    """Row index (0-based) of the first non-finite entry in an (n, d) matrix."""
    bad = ~np.isfinite(mat).all(axis=1)
    return int(np.argmax(bad))


def run_model(model: ModelSpec, x: InputSequence) -> Trace:
    """Execute the model on one input, recording the full internal trace.

    Raises NumericError naming the step and component if any intermediate
    value goes non-finite (overflow from extreme weights, typically).
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _run_model_checked(model, x)


def _run_model_checked(model: ModelSpec, x: InputSequence) -> Trace:
    X = _embed(model, x)
    A = X
    for li, layer in enumerate(model.pre_layers):
        A = apply_activation(layer.activation, A @ layer.weights.T + layer.bias)
        if not np.isfinite(A).all():
            raise NumericError(
                f"non-finite value in component 'pre_layers[{li}]' "
                f"at step {_first_bad_step(A) + 1}"
            )

    p = model.lstm
    n = model.n_steps
    # input-side affine projections for all steps at once; the recurrent part
    # has to stay a loop
    proj = {name: A @ p.gate(name).w_input.T + p.gate(name).bias for name in GATE_NAMES}
    c = np.zeros(p.units)
    h = np.zeros(p.units)
    F = np.empty((n, p.units))
    I = np.empty((n, p.units))
    O = np.empty((n, p.units))
    C = np.empty((n, p.units))
    H = np.empty((n, p.units))
    wh = {name: p.gate(name).w_hidden for name in GATE_NAMES}
    for t in range(n):
        f = sigmoid(proj["forget"][t] + wh["forget"] @ h)
        i = sigmoid(proj["input"][t] + wh["input"] @ h)
        g = np.tanh(proj["candidate"][t] + wh["candidate"] @ h)
        c = f * c + i * g
        o = sigmoid(proj["output"][t] + wh["output"] @ h)
        h = o * np.tanh(c)
        F[t], I[t], O[t], C[t], H[t] = f, i, o, c, h

    for name, mat in (("f", F), ("i", I), ("o", O), ("c", C), ("h", H)):
        if not np.isfinite(mat).all():
            raise NumericError(
                f"non-finite value in component '{name}' at step {_first_bad_step(mat) + 1}"
            )

    v = H[n - 1]
    for li, layer in enumerate(model.post_layers):
        v = apply_activation(layer.activation, layer.weights @ v + layer.bias)
        if not np.isfinite(v).all():
            raise NumericError(f"non-finite value in component 'post_layers[{li}]' at step {n}")

    if model.task == "classification":
        prediction: int | float = int(np.argmax(v))
    else:
        prediction = float(v[0])

    steps = tuple(
        StepTrace(t=t + 1, f=F[t], i=I[t], o=O[t], c=C[t], h=H[t]) for t in range(n)
    )
    return Trace(steps=steps, output=v, prediction=prediction)


# ── serialization ─────────────────────────────────────────────────────────


def _gate_to_json(g: GateWeights) -> dict:
    return {
        "w_input": g.w_input.reshape(-1).tolist(),
        "w_hidden": g.w_hidden.reshape(-1).tolist(),
        "bias": g.bias.tolist(),
    }


def _dense_to_json(l: DenseLayerParams) -> dict:
    return {
        "rows": l.out_dim,
        "cols": l.in_dim,
        "weights": l.weights.reshape(-1).tolist(),
        "bias": l.bias.tolist(),
        "activation": l.activation,
    }


def model_to_json(model: ModelSpec) -> dict:
    d = {
        "format_version": FORMAT_VERSION,
        "task": model.task,
        "input_kind": model.input_kind,
        "n_steps": model.n_steps,
        "pre_layers": [_dense_to_json(l) for l in model.pre_layers],
        "lstm": {
            "units": model.lstm.units,
            "input_dim": model.lstm.input_dim,
            "forget": _gate_to_json(model.lstm.forget),
            "input": _gate_to_json(model.lstm.input),
            "candidate": _gate_to_json(model.lstm.candidate),
            "output": _gate_to_json(model.lstm.output),
        },
        "post_layers": [_dense_to_json(l) for l in model.post_layers],
    }
    if model.token_embedding is not None:
        d["token_embedding"] = {
            "vocab": model.token_embedding.shape[0],
            "dim": model.token_embedding.shape[1],
            "weights": model.token_embedding.reshape(-1).tolist(),
        }
    return d


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ModelError(f"{where} is missing required field {key!r}")
    return d[key]


def _gate_from_json(d: dict, name: str, units: int, input_dim: int) -> GateWeights:
    where = f"lstm.{name}"
    flat_wi = np.asarray(_require(d, "w_input", where), dtype=np.float64)
    flat_wh = np.asarray(_require(d, "w_hidden", where), dtype=np.float64)
    bias = np.asarray(_require(d, "bias", where), dtype=np.float64)
    if flat_wi.size != units * input_dim:
        raise ShapeError(
            f"{where}.w_input has {flat_wi.size} entries, expected {units}*{input_dim}"
        )
    if flat_wh.size != units * units:
        raise ShapeError(f"{where}.w_hidden has {flat_wh.size} entries, expected {units}*{units}")
    if bias.size != units:
        raise ShapeError(f"{where}.bias has {bias.size} entries, expected {units}")
    return GateWeights(
        w_input=flat_wi.reshape(units, input_dim),
        w_hidden=flat_wh.reshape(units, units),
        bias=bias,
    )


def _dense_from_json(d: dict, where: str) -> DenseLayerParams:
    rows = int(_require(d, "rows", where))
    cols = int(_require(d, "cols", where))
    flat = np.asarray(_require(d, "weights", where), dtype=np.float64)
    bias = np.asarray(_require(d, "bias", where), dtype=np.float64)
    act = _require(d, "activation", where)
    if rows < 1 or cols < 1:
        raise ShapeError(f"{where} has non-positive dims rows={rows} cols={cols}")
    if flat.size != rows * cols:
        raise ShapeError(f"{where}.weights has {flat.size} entries, expected {rows}*{cols}")
    if bias.size != rows:
        raise ShapeError(f"{where}.bias has {bias.size} entries, expected {rows}")
    return DenseLayerParams(weights=flat.reshape(rows, cols), bias=bias, activation=act)


def model_from_json(d: dict) -> ModelSpec:
    version = _require(d, "format_version", "model")
    if version != FORMAT_VERSION:
        raise ModelError(f"unsupported format_version {version!r}, expected {FORMAT_VERSION}")
    lstm_d = _require(d, "lstm", "model")
    units = int(_require(lstm_d, "units", "lstm"))
    input_dim = int(_require(lstm_d, "input_dim", "lstm"))
    if units < 1 or input_dim < 1:
        raise ModelError(f"lstm dims must be positive, got units={units} input_dim={input_dim}")
    lstm = LstmLayerParams(
        units=units,
        input_dim=input_dim,
        forget=_gate_from_json(_require(lstm_d, "forget", "lstm"), "forget", units, input_dim),
        input=_gate_from_json(_require(lstm_d, "input", "lstm"), "input", units, input_dim),
        candidate=_gate_from_json(
            _require(lstm_d, "candidate", "lstm"), "candidate", units, input_dim
        ),
        output=_gate_from_json(_require(lstm_d, "output", "lstm"), "output", units, input_dim),
    )
    emb = None
    if d.get("token_embedding") is not None:
        emb_d = d["token_embedding"]
        vocab = int(_require(emb_d, "vocab", "token_embedding"))
        dim = int(_require(emb_d, "dim", "token_embedding"))
        flat = np.asarray(_require(emb_d, "weights", "token_embedding"), dtype=np.float64)
        if vocab < 1 or dim < 1:
            raise ShapeError(f"token_embedding has non-positive dims vocab={vocab} dim={dim}")
        if flat.size != vocab * dim:
            raise ShapeError(
                f"token_embedding.weights has {flat.size} entries, expected {vocab}*{dim}"
            )
        emb = flat.reshape(vocab, dim)
    return ModelSpec(
        n_steps=int(_require(d, "n_steps", "model")),
        task=_require(d, "task", "model"),
        input_kind=_require(d, "input_kind", "model"),
        pre_layers=tuple(
            _dense_from_json(l, f"pre_layers[{k}]")
            for k, l in enumerate(d.get("pre_layers", []))
        ),
        lstm=lstm,
        post_layers=tuple(
            _dense_from_json(l, f"post_layers[{k}]")
            for k, l in enumerate(_require(d, "post_layers", "model"))
        ),
        token_embedding=emb,
    )


def save_model(model: ModelSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str | Path) -> ModelSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as e:
        raise ModelError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(d, dict):
        raise ModelError(f"{path}: model file must hold a JSON object")
    return model_from_json(d)
