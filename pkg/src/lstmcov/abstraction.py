"""Scalar abstractions over traces and equiprobable symbolization.

Each step vector of a trace component is collapsed to a scalar three ways:
the sum of its positive entries, the sum of its negative entries, and (for
gates) its mean. A series prepends the value at the zero initial state, so
index t holds step t and index 0 the start. Symbolization fits a Gaussian to
sample values and cuts it into equally probable regions; a value's symbol is
how many region boundaries lie strictly below it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import norm


class Component(str, Enum):
    F = "f"
    I = "i"
    O = "o"
    C = "c"
    H = "h"


class Abstraction(str, Enum):
    POSITIVE = "+"
    NEGATIVE = "-"
    AVERAGE = "avg"


GATES = (Component.F, Component.I, Component.O)
COMPONENT_ORDER = tuple(Component)
ABSTRACTION_ORDER = tuple(Abstraction)


class AbstractionError(ValueError):
    pass


class SymbolizerError(ValueError):
    pass


def aggregate_positive(v: np.ndarray) -> float:
    """Sum of the strictly positive entries (0.0 if there are none)."""
    v = np.asarray(v, dtype=np.float64)
    return float(v[v > 0].sum())


def aggregate_negative(v: np.ndarray) -> float:
    """Sum of the strictly negative entries (0.0 if there are none)."""
    v = np.asarray(v, dtype=np.float64)
    return float(v[v < 0].sum())


def gate_average(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise AbstractionError("cannot average an empty vector")
    return float(v.mean())


@dataclass(frozen=True)
class AbstractionSeries:
    """One (component, abstraction) scalar per time step, t=0 included."""

    component: Component
    abstraction: Abstraction
    values: np.ndarray  # length n_steps + 1, index 0 is the initial state

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1


def initial_value(component: Component, abstraction: Abstraction) -> float:
    """Series value at t=0. Gates have no zero-state value; their average
    is pinned at the no-information point 0.5. Everything else is 0."""
    if abstraction is Abstraction.AVERAGE and component in GATES:
        return 0.5
    return 0.0


def series_values(trace, component: Component, abstraction: Abstraction) -> np.ndarray:
    """Vectorized series computation; returns the length n+1 value array."""
    mat = trace.component_matrix(component.value)  # (n, units)
    if abstraction is Abstraction.POSITIVE:
        body = np.where(mat > 0, mat, 0.0).sum(axis=1)
    elif abstraction is Abstraction.NEGATIVE:
        body = np.where(mat < 0, mat, 0.0).sum(axis=1)
    else:
        body = mat.mean(axis=1)
    out = np.empty(mat.shape[0] + 1)
    out[0] = initial_value(component, abstraction)
    out[1:] = body
    return out


def series(trace, component: Component, abstraction: Abstraction) -> AbstractionSeries:
    return AbstractionSeries(
        component=component,
        abstraction=abstraction,
        values=series_values(trace, component, abstraction),
    )


def stepwise_change(plus: AbstractionSeries, minus: AbstractionSeries) -> np.ndarray:
    """Per-step information change: |Δξ+| + |Δξ-| for t = 1..n."""
    if plus.component is not minus.component:
        raise AbstractionError(
            f"mismatched components {plus.component.value!r} and {minus.component.value!r}"
        )
    if plus.abstraction is not Abstraction.POSITIVE or minus.abstraction is not Abstraction.NEGATIVE:
        raise AbstractionError("stepwise_change takes the (+, -) series pair in that order")
    if plus.values.shape != minus.values.shape:
        raise AbstractionError("series lengths differ")
    return np.abs(np.diff(plus.values)) + np.abs(np.diff(minus.values))


def delta_series(trace, component: Component) -> np.ndarray:
    """Convenience: stepwise change of a component straight from a trace."""
    return stepwise_change(
        series(trace, component, Abstraction.POSITIVE),
        series(trace, component, Abstraction.NEGATIVE),
    )


# ── symbolization ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Symbolizer:
    """Gaussian fit cut into alphabet_size equally probable regions."""

    alphabet_size: int
    mu: float
    sigma: float
    breakpoints: np.ndarray  # ascending, length alphabet_size - 1

    def __post_init__(self):
        bp = np.ascontiguousarray(self.breakpoints, dtype=np.float64)
        bp.setflags(write=False)
        if self.alphabet_size < 2:
            raise SymbolizerError(f"alphabet_size must be >= 2, got {self.alphabet_size}")
        if not (self.sigma > 0) or not np.isfinite(self.sigma):
            raise SymbolizerError(f"sigma must be positive and finite, got {self.sigma}")
        if bp.shape != (self.alphabet_size - 1,):
            raise SymbolizerError(
                f"expected {self.alphabet_size - 1} breakpoints, got shape {bp.shape}"
            )
        if bp.size > 1 and not np.all(np.diff(bp) > 0):
            raise SymbolizerError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)

    def symbol_of(self, value: float) -> int:
        """Count of breakpoints strictly below value."""
        return int(np.searchsorted(self.breakpoints, value, side="left"))

    def symbols_of(self, values: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.breakpoints, np.asarray(values, dtype=np.float64),
                               side="left")

    def to_json(self) -> dict:
        return {
            "alphabet_size": self.alphabet_size,
            "mu": self.mu,
            "sigma": self.sigma,
            "breakpoints": self.breakpoints.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Symbolizer":
        return cls(
            alphabet_size=int(d["alphabet_size"]),
            mu=float(d["mu"]),
            sigma=float(d["sigma"]),
            breakpoints=np.asarray(d["breakpoints"], dtype=np.float64),
        )


def fit_symbolizer(samples: np.ndarray, alphabet_size: int) -> Symbolizer:
    """Fit the Gaussian to samples and place breakpoints at the k/|alphabet|
    quantiles, so each symbol is equally probable under the fit.

    Raises SymbolizerError on fewer than two samples or zero variance.
    """
    if alphabet_size < 2:
        raise SymbolizerError(f"alphabet_size must be >= 2, got {alphabet_size}")
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size < 2:
        raise SymbolizerError(f"need at least 2 samples to fit, got {samples.size}")
    if not np.isfinite(samples).all():
        raise SymbolizerError("samples contain non-finite values")
    mu = float(samples.mean())
    sigma = float(samples.std(ddof=1))
    if not sigma > 0:
        raise SymbolizerError("degenerate sample set: zero variance")
    qs = np.arange(1, alphabet_size) / alphabet_size
    breakpoints = norm.ppf(qs, loc=mu, scale=sigma)
    return Symbolizer(alphabet_size=alphabet_size, mu=mu, sigma=sigma,
                      breakpoints=breakpoints)


@dataclass(frozen=True)
class SymbolicWord:
    """Symbol indices over a closed step span [t1, t2] (1-based, inclusive)."""

    symbols: tuple[int, ...]
    span: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        object.__setattr__(self, "span", (int(self.span[0]), int(self.span[1])))

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def letters(self) -> str:
        return word_letters(self.symbols)


def word_letters(symbols) -> str:
    """Render symbol indices as letters for reports: 0 -> a, 1 -> b, ..."""
    return "".join(chr(ord("a") + int(s)) for s in symbols)


def symbolize(ser: AbstractionSeries, sym: Symbolizer, span: tuple[int, int]) -> SymbolicWord:
    t1, t2 = int(span[0]), int(span[1])
    if not (1 <= t1 <= t2 <= ser.n_steps):
        raise AbstractionError(
            f"span [{t1}, {t2}] outside steps [1, {ser.n_steps}]"
        )
    return SymbolicWord(
        symbols=tuple(int(s) for s in sym.symbols_of(ser.values[t1 : t2 + 1])),
        span=(t1, t2),
    )
