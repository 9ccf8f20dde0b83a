"""Command-line front end: thresholds, fuzz, trace, report.

A run is described by one JSON config file; flags override individual
fields. Paths inside the config are resolved relative to the config file,
paths given on the command line relative to the working directory.
Validation is total before any compute starts: a bad config never leaves
partial artifacts behind.

Exit codes: 0 success (fuzz: target rate reached), 1 usage or config
error, 2 fuzz budget exhausted before the target rate.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .abstraction import (
    Abstraction,
    AbstractionError,
    Component,
    SymbolizerError,
    delta_series,
    series,
    symbolize,
    word_letters,
)
from .coverage import (
    CoverageError,
    MetricSpec,
    ThresholdConfig,
    Thresholds,
    estimate_thresholds,
    load_thresholds,
    save_thresholds,
)
from .fuzzer import (
    FuzzConfig,
    FuzzError,
    load_corpus,
    replay_report,
    run,
    save_run,
)
from .lstm_core import (
    InputError,
    ModelError,
    NumericError,
    input_from_json,
    load_model,
    load_seed_records,
    run_model,
)
from .mutation import MutationConfig, MutationError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BUDGET = 2

_CONFIG_KEYS = {
    "model_path", "seeds_path", "training_path", "thresholds_path",
    "output_dir", "metrics", "thresholds", "mutation", "fuzz",
}
_THRESHOLD_KEYS = {"tau", "alphabet_size", "tc_span"}


class CliError(Exception):
    """Anything wrong with the invocation or the config file."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for budget exhaustion.
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ── config loading ────────────────────────────────────────────────────────


@dataclass
class RunConfig:
    """The fully resolved picture of one invocation."""

    model_path: Path | None = None
    seeds_path: Path | None = None
    training_path: Path | None = None
    thresholds_path: Path | None = None
    output_dir: Path = Path("out")
    metrics: tuple[MetricSpec, ...] = ()
    threshold_config: ThresholdConfig | None = None
    mutation: MutationConfig = field(default_factory=MutationConfig)
    fuzz: FuzzConfig = field(default_factory=FuzzConfig)


def _read_json(path: Path, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise CliError(f"cannot read {what} {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise CliError(f"{what} {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise CliError(f"{what} {path}: expected a JSON object")
    return doc


def load_config(path: str | None, args: argparse.Namespace) -> RunConfig:
    """Merge the config file (if any) with command-line overrides."""
    cfg = RunConfig()
    if path is not None:
        doc = _read_json(Path(path), "config")
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise CliError(f"config {path}: unknown keys {sorted(unknown)}")
        base = Path(path).resolve().parent

        def resolve(key):
            return base / doc[key] if doc.get(key) else None

        cfg.model_path = resolve("model_path")
        cfg.seeds_path = resolve("seeds_path")
        cfg.training_path = resolve("training_path")
        cfg.thresholds_path = resolve("thresholds_path")
        if doc.get("output_dir"):
            cfg.output_dir = base / doc["output_dir"]

        try:
            if "metrics" in doc:
                cfg.metrics = tuple(MetricSpec.from_json(m) for m in doc["metrics"])
            th = doc.get("thresholds", {})
            unknown = set(th) - _THRESHOLD_KEYS
            if unknown:
                raise CliError(f"config {path}: unknown thresholds keys {sorted(unknown)}")
            if th or cfg.metrics:
                cfg.threshold_config = ThresholdConfig(
                    tau=float(th.get("tau", 0.8)),
                    alphabet_size=int(th.get("alphabet_size", 2)),
                    tc_span=tuple(th["tc_span"]) if th.get("tc_span") else None,
                    **({"metrics": cfg.metrics} if cfg.metrics else {}),
                )
            if "mutation" in doc:
                cfg.mutation = MutationConfig.from_json(doc["mutation"])
            if "fuzz" in doc:
                cfg.fuzz = FuzzConfig.from_json(doc["fuzz"])
        except (KeyError, TypeError, ValueError) as e:
            # dataclass validators raise ValueError subclasses with good text
            raise CliError(f"config {path}: {e}") from e

    if getattr(args, "model", None):
        cfg.model_path = Path(args.model)
    if getattr(args, "seed", None) is not None:
        cfg.fuzz = replace(cfg.fuzz, rng_seed=args.seed)
    if getattr(args, "max_cases", None) is not None:
        cfg.fuzz = replace(cfg.fuzz, max_cases=args.max_cases)
    if getattr(args, "target_rate", None) is not None:
        cfg.fuzz = replace(cfg.fuzz, target_coverage_rate=args.target_rate)
    if getattr(args, "workers", None) is not None:
        cfg.fuzz = replace(cfg.fuzz, worker_count=args.workers)
    return cfg


def _require(cfg: RunConfig, attr: str, why: str) -> Path:
    value = getattr(cfg, attr)
    if value is None:
        raise CliError(f"{attr} is required {why} (set it in the config or via flags)")
    return value


def _must_exist(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError(f"{what} not found: {path}")
    return path


def _obtain_thresholds(cfg: RunConfig, model) -> Thresholds:
    """Load the thresholds file when configured, estimate otherwise."""
    if cfg.thresholds_path is not None:
        return load_thresholds(cfg.thresholds_path)
    training = load_seed_records(cfg.training_path)
    return estimate_thresholds(
        model, [r.input for r in training], cfg.threshold_config or ThresholdConfig()
    )


def _check_thresholds_source(cfg: RunConfig, command: str) -> None:
    """Validate the thresholds source before any compute."""
    if cfg.thresholds_path is not None:
        _must_exist(cfg.thresholds_path, "thresholds file")
    elif cfg.training_path is not None:
        _must_exist(cfg.training_path, "training data")
    else:
        raise CliError(
            f"{command} needs thresholds_path or training_path in the config"
        )


def _metrics(cfg: RunConfig):
    return cfg.metrics or None  # None lets downstream pick the default set


# ── commands ──────────────────────────────────────────────────────────────


def cmd_thresholds(cfg: RunConfig, out: str | None) -> int:
    model_path = _must_exist(_require(cfg, "model_path", "to estimate thresholds"),
                             "model file")
    training_path = _must_exist(
        _require(cfg, "training_path", "to estimate thresholds"), "training data")
    if out is not None:
        target = Path(out)
    elif cfg.thresholds_path is not None:
        target = cfg.thresholds_path
    else:
        target = cfg.output_dir / "thresholds.json"

    model = load_model(model_path)
    training = load_seed_records(training_path)
    th = estimate_thresholds(model, [r.input for r in training],
                             cfg.threshold_config or ThresholdConfig())
    target.parent.mkdir(parents=True, exist_ok=True)
    save_thresholds(th, target)
    print(f"thresholds over {len(training)} training inputs -> {target} "
          f"(tau={th.tau}, tc_span=[{th.tc_span[0]}, {th.tc_span[1]}])")
    return EXIT_OK


def cmd_fuzz(cfg: RunConfig, out: str | None) -> int:
    model_path = _must_exist(_require(cfg, "model_path", "to fuzz"), "model file")
    seeds_path = _must_exist(_require(cfg, "seeds_path", "to fuzz"), "seed data")
    _check_thresholds_source(cfg, "fuzz")
    out_dir = Path(out) if out is not None else cfg.output_dir

    model = load_model(model_path)
    seeds = load_seed_records(seeds_path)
    thresholds = _obtain_thresholds(cfg, model)
    corpus, report = run(model, [r.input for r in seeds], thresholds,
                         _metrics(cfg), cfg.fuzz, cfg.mutation)
    paths = save_run(corpus, report, out_dir)

    rates = " ".join(f"{k}={v:.3f}" for k, v in report.final_rates.items())
    print(f"{report.generated_count} cases generated from {report.seed_count} seeds; "
          f"coverage {report.overall_rate:.3f} ({rates}); "
          f"adversary rate {report.adversary_rate:.3f}")
    print(f"artifacts in {Path(paths['report']).parent}")
    if report.target_reached:
        print(f"target rate {cfg.fuzz.target_coverage_rate} reached")
        return EXIT_OK
    print(f"budget exhausted below target rate {cfg.fuzz.target_coverage_rate}")
    return EXIT_BUDGET


def _trace_document(model, x, thresholds: Thresholds) -> dict:
    trace = run_model(model, x)
    h_pos = series(trace, Component.H, Abstraction.POSITIVE)
    h_neg = series(trace, Component.H, Abstraction.NEGATIVE)
    f_avg = series(trace, Component.F, Abstraction.AVERAGE)
    delta_h = delta_series(trace, Component.H)

    symbol_rows = {}
    words = {}
    for (comp, abst), sym in sorted(
        thresholds.symbolizers.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
    ):
        key = f"{comp.value}.{abst.value}"
        ser = series(trace, comp, abst)
        symbol_rows[key] = [word_letters([s]) for s in sym.symbols_of(ser.values[1:])]
        word = symbolize(ser, sym, thresholds.tc_span)
        words[key] = {"span": list(word.span), "letters": word.letters}

    rows = []
    for t in range(1, trace.n_steps + 1):
        rows.append({
            "t": t,
            "xi_h_pos": h_pos.values[t],
            "xi_h_neg": h_neg.values[t],
            "delta_h": delta_h[t - 1],
            "xi_f_avg": f_avg.values[t],
            "symbols": {key: col[t - 1] for key, col in symbol_rows.items()},
        })
    return {
        "prediction": trace.prediction,
        "output": trace.output.tolist(),
        "n_steps": trace.n_steps,
        "rows": rows,
        "words": words,
    }


def cmd_trace(cfg: RunConfig, input_path: str, out: str | None) -> int:
    model_path = _must_exist(_require(cfg, "model_path", "to trace"), "model file")
    source = _must_exist(Path(input_path), "input file")
    _check_thresholds_source(cfg, "trace")

    doc = _read_json(source, "input")
    payload = doc["input"] if "input" in doc else doc
    try:
        x = input_from_json(payload)
    except (InputError, KeyError, TypeError, ValueError) as e:
        raise CliError(f"input {source}: {e}") from e

    model = load_model(model_path)
    thresholds = _obtain_thresholds(cfg, model)
    document = _trace_document(model, x, thresholds)
    text = json.dumps(document, indent=1, sort_keys=True)
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
        print(f"trace -> {out}")
    else:
        print(text)
    return EXIT_OK


def cmd_report(cfg: RunConfig, corpus_path: str, out: str | None,
               workers: int | None) -> int:
    model_path = _must_exist(_require(cfg, "model_path", "to rebuild a report"),
                             "model file")
    source = _must_exist(Path(corpus_path), "corpus file")
    _check_thresholds_source(cfg, "report")
    out_dir = Path(out) if out is not None else cfg.output_dir

    model = load_model(model_path)
    corpus = load_corpus(source)
    thresholds = _obtain_thresholds(cfg, model)
    report = replay_report(corpus, model, thresholds, _metrics(cfg), cfg.fuzz,
                           worker_count=workers if workers is not None else 1)
    paths = save_run(corpus, report, out_dir)
    print(f"replayed {len(corpus.cases)} cases; coverage {report.overall_rate:.3f}; "
          f"artifacts in {Path(paths['report']).parent}")
    return EXIT_OK


# ── argument wiring ───────────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lstmcov",
                     description="coverage-guided test generation for LSTM models")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, fuzz_knobs=False, workers=False):
        p.add_argument("--config", help="run config JSON")
        p.add_argument("--model", help="model JSON (overrides the config)")
        p.add_argument("--out", help="output file or directory")
        if fuzz_knobs:
            p.add_argument("--seed", type=int, help="fuzz RNG seed")
            p.add_argument("--max-cases", type=int, dest="max_cases",
                           help="generation budget")
            p.add_argument("--target-rate", type=float, dest="target_rate",
                           help="stop once overall coverage reaches this rate")
        if workers:
            p.add_argument("--workers", type=int, help="evaluation worker threads")

    p = sub.add_parser("thresholds", help="estimate thresholds from training data")
    common(p)

    p = sub.add_parser("fuzz", help="run the generation loop, write artifacts")
    common(p, fuzz_knobs=True, workers=True)

    p = sub.add_parser("trace", help="dump abstraction series for one input")
    p.add_argument("input", help="JSON file holding one input")
    common(p)

    p = sub.add_parser("report", help="rebuild report artifacts from a corpus")
    p.add_argument("corpus", help="corpus JSON-lines file")
    common(p, workers=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args)
        if args.command == "thresholds":
            return cmd_thresholds(cfg, args.out)
        if args.command == "fuzz":
            return cmd_fuzz(cfg, args.out)
        if args.command == "trace":
            return cmd_trace(cfg, args.input, args.out)
        return cmd_report(cfg, args.corpus, args.out, args.workers)
    except (CliError, ModelError, InputError, NumericError, CoverageError,
            AbstractionError, SymbolizerError, MutationError, FuzzError) as e:
        print(f"lstmcov: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
