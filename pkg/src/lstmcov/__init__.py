"""Coverage-guided testing for LSTM networks.

The pipeline: run a model over an input recording every gate and state vector
(lstm_core), compress those vectors into scalar series (abstraction), turn the
series into test conditions and track which a test suite satisfies (coverage),
and generate new inputs by random or coverage-targeted mutation under an
adversarial-example oracle (mutation, fuzzer). The cli module fronts the whole
thing for files on disk.
"""

from .abstraction import (
    Abstraction,
    AbstractionSeries,
    Component,
    SymbolicWord,
    Symbolizer,
    delta_series,
    fit_symbolizer,
    series,
    symbolize,
)
from .coverage import (
    ConditionSet,
    CoverageLedger,
    MetricSpec,
    ThresholdConfig,
    Thresholds,
    default_metrics,
    estimate_thresholds,
    evaluate_trace,
    load_thresholds,
    neuron_coverage,
    save_thresholds,
)
from .fuzzer import (
    Corpus,
    FuzzConfig,
    RunReport,
    TestCase,
    load_corpus,
    recompute_adversarial,
    replay_report,
    run,
    save_corpus,
    save_run,
)
from .lstm_core import (
    ContinuousInput,
    DenseLayerParams,
    GateWeights,
    InputError,
    InputSequence,
    LstmLayerParams,
    ModelError,
    ModelSpec,
    NumericError,
    SeedRecord,
    ShapeError,
    StepTrace,
    TokenInput,
    Trace,
    input_from_json,
    input_to_json,
    load_model,
    load_seed_records,
    lstm_cell_step,
    model_from_json,
    model_to_json,
    run_model,
    save_model,
    save_seed_records,
)
from .mutation import MutationConfig, coverage_loss, random_mutate, targeted_mutate

__version__ = "0.1.0"
