"""Synthetic models and data for demos, fixtures, and self-tests.

Nothing here is trained. Weights come from seeded Gaussians with scales
picked so the toys behave like small trained networks rather than dead ones:
gate activations spread over (0, 1) instead of pinning to the extremes,
random input noise flips predictions at a useful rate, and every dense
neuron fires somewhere within a few dozen random inputs. The row classifier
reads an image one row per step, the way a sequence model reads a sentence.
"""

from __future__ import annotations

import numpy as np

from .lstm_core import (
    ContinuousInput,
    DenseLayerParams,
    GateWeights,
    InputSequence,
    LstmLayerParams,
    ModelSpec,
    SeedRecord,
    TokenInput,
    run_model,
)


def _gate(rng: np.random.Generator, units: int, input_dim: int, scale: float) -> GateWeights:
    return GateWeights(
        w_input=rng.normal(0.0, scale / np.sqrt(input_dim), (units, input_dim)),
        w_hidden=rng.normal(0.0, scale / np.sqrt(units), (units, units)),
        bias=rng.normal(0.0, 0.1, units),
    )


def _dense(rng: np.random.Generator, out_dim: int, in_dim: int,
           activation: str, scale: float) -> DenseLayerParams:
    return DenseLayerParams(
        weights=rng.normal(0.0, scale / np.sqrt(in_dim), (out_dim, in_dim)),
        bias=rng.normal(0.0, 0.05, out_dim),
        activation=activation,
    )


def make_row_classifier(
    n_steps: int = 28,
    row_dim: int = 28,
    units: int = 12,
    hidden: int = 16,
    n_classes: int = 4,
    seed: int = 7,
    gate_scale: float = 4.5,
    head_scale: float = 2.0,
) -> ModelSpec:
    """Image-row classifier: each step consumes one row of a [0,1] image.

    After the random init, the head is calibrated on a probe batch of blob
    images: logits are centered so no class wins everywhere, and any dense
    neuron whose pre-activation never clears zero on the probe gets its bias
    lifted until it does. A trained network arrives at both properties on
    its own; the calibration just spares the toy a training loop.
    """
    rng = np.random.default_rng(seed)
    lstm = LstmLayerParams(
        units=units,
        input_dim=row_dim,
        forget=_gate(rng, units, row_dim, gate_scale),
        input=_gate(rng, units, row_dim, gate_scale),
        candidate=_gate(rng, units, row_dim, gate_scale),
        output=_gate(rng, units, row_dim, gate_scale),
    )
    hidden_layer = _dense(rng, hidden, units, "relu", head_scale)
    out_layer = _dense(rng, n_classes, hidden, "softmax", head_scale)

    probe_rng = np.random.default_rng(seed + 101)
    probe_model = ModelSpec(
        n_steps=n_steps, task="regression", input_kind="continuous",
        lstm=lstm, post_layers=(_identity_head(units),),
    )
    probe = np.stack(
        [
            run_model(
                probe_model,
                ContinuousInput(
                    values=make_blob_image(probe_rng, k % n_classes, n_steps,
                                           row_dim, n_classes),
                    clamp=(0.0, 1.0),
                ),
            ).steps[-1].h
            for k in range(64)
        ]
    )
    hidden_layer = _lift_dead(hidden_layer, probe)
    act = np.maximum(probe @ hidden_layer.weights.T + hidden_layer.bias, 0.0)
    out_layer = _center_logits(out_layer, act)
    out_layer = _lift_dead(out_layer, act)

    return ModelSpec(
        n_steps=n_steps, task="classification", input_kind="continuous",
        lstm=lstm, post_layers=(hidden_layer, out_layer),
    )


def _identity_head(units: int) -> DenseLayerParams:
    return DenseLayerParams(weights=np.eye(1, units), bias=np.zeros(1), activation="linear")


def _lift_dead(layer: DenseLayerParams, acts: np.ndarray,
               floor: float = 0.6) -> DenseLayerParams:
    """Raise each neuron's bias until its best probe pre-activation > floor."""
    pre = acts @ layer.weights.T + layer.bias
    lift = np.maximum(0.0, floor - pre.max(axis=0))
    return DenseLayerParams(
        weights=layer.weights, bias=layer.bias + lift, activation=layer.activation
    )


def _center_logits(layer: DenseLayerParams, acts: np.ndarray) -> DenseLayerParams:
    pre = acts @ layer.weights.T + layer.bias
    return DenseLayerParams(
        weights=layer.weights, bias=layer.bias - pre.mean(axis=0),
        activation=layer.activation,
    )


def make_token_classifier(
    vocab_size: int = 24,
    emb_dim: int = 6,
    units: int = 8,
    n_steps: int = 12,
    n_classes: int = 2,
    seed: int = 11,
    gate_scale: float = 2.0,
) -> ModelSpec:
    """Sentiment-style toy: embedded token sequence to a class."""
    rng = np.random.default_rng(seed)
    embedding = rng.normal(0.0, 1.0, (vocab_size, emb_dim))
    embedding[0] = 0.0  # pad embeds to nothing
    lstm = LstmLayerParams(
        units=units,
        input_dim=emb_dim,
        forget=_gate(rng, units, emb_dim, gate_scale),
        input=_gate(rng, units, emb_dim, gate_scale),
        candidate=_gate(rng, units, emb_dim, gate_scale),
        output=_gate(rng, units, emb_dim, gate_scale),
    )
    post = (_dense(rng, n_classes, units, "softmax", 1.8),)
    return ModelSpec(
        n_steps=n_steps, task="classification", input_kind="token",
        lstm=lstm, post_layers=post, token_embedding=embedding,
    )


def make_blob_image(
    rng: np.random.Generator,
    label: int,
    n_steps: int = 28,
    row_dim: int = 28,
    n_classes: int = 4,
    noise: float = 0.12,
) -> np.ndarray:
    """A digit-ish image: one Gaussian blob whose position encodes the class."""
    angle = 2.0 * np.pi * label / n_classes
    cy = n_steps / 2.0 + (n_steps / 4.0) * np.sin(angle) + rng.normal(0.0, 1.0)
    cx = row_dim / 2.0 + (row_dim / 4.0) * np.cos(angle) + rng.normal(0.0, 1.0)
    width = 2.5 + 0.5 * rng.random()
    yy, xx = np.mgrid[0:n_steps, 0:row_dim]
    img = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * width**2)))
    img = img + rng.normal(0.0, noise, img.shape)
    return np.clip(img, 0.0, 1.0)


def make_blob_seeds(
    count: int,
    n_steps: int = 28,
    row_dim: int = 28,
    n_classes: int = 4,
    seed: int = 0,
    noise: float = 0.12,
) -> list[SeedRecord]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        label = k % n_classes
        img = make_blob_image(rng, label, n_steps, row_dim, n_classes, noise)
        out.append(SeedRecord(input=ContinuousInput(values=img, clamp=(0.0, 1.0)),
                              label=label))
    return out


def make_token_seeds(count: int, model: ModelSpec, seed: int = 0) -> list[SeedRecord]:
    rng = np.random.default_rng(seed)
    vocab = model.vocab_size
    out = []
    for _ in range(count):
        length = int(rng.integers(model.n_steps // 2, model.n_steps + 1))
        ids = [int(rng.integers(1, vocab)) for _ in range(length)]
        ids += [0] * (model.n_steps - length)
        x = TokenInput(ids=tuple(ids), vocab_size=vocab, pad_id=0)
        out.append(SeedRecord(input=x, label=int(run_model(model, x).prediction)))
    return out


def bisect_to_boundary(
    model: ModelSpec,
    x_a: ContinuousInput,
    x_b: ContinuousInput,
    max_iters: int = 60,
) -> tuple[ContinuousInput, ContinuousInput]:
    """Walk the segment between two differently-predicted inputs down to a
    pair of nearly identical inputs that still disagree.

    Returns (low, high) with low predicted like x_a and high like x_b.
    """
    pred_a = run_model(model, x_a).prediction
    pred_b = run_model(model, x_b).prediction
    if pred_a == pred_b:
        raise ValueError("endpoints must be predicted differently")
    a, b = x_a.values, x_b.values
    lo, hi = 0.0, 1.0
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        x_mid = ContinuousInput(values=(1.0 - mid) * a + mid * b, clamp=x_a.clamp)
        if run_model(model, x_mid).prediction == pred_a:
            lo = mid
        else:
            hi = mid
    make = lambda t: ContinuousInput(values=(1.0 - t) * a + t * b, clamp=x_a.clamp)  # noqa: E731
    return make(lo), make(hi)


def near_boundary_inputs(
    model: ModelSpec,
    pool: list[InputSequence],
    count: int,
    seed: int = 0,
) -> list[ContinuousInput]:
    """Inputs sitting just on the near side of a decision boundary, found by
    bisecting between pool members the model classifies differently."""
    rng = np.random.default_rng(seed)
    preds = [run_model(model, x).prediction for x in pool]
    out: list[ContinuousInput] = []
    attempts = 0
    while len(out) < count and attempts < 50 * count:
        attempts += 1
        i = int(rng.integers(len(pool)))
        j = int(rng.integers(len(pool)))
        if preds[i] == preds[j]:
            continue
        low, _ = bisect_to_boundary(model, pool[i], pool[j])
        out.append(low)
    if len(out) < count:
        raise ValueError(
            f"could only build {len(out)} of {count} boundary inputs; "
            "the pool may be predicted single-class"
        )
    return out
