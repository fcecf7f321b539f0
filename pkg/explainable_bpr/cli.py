"""Command-line pipeline: ingest, split, precompute, tune, train, evaluate and more.

Every subcommand reads and writes artifacts in ``--output`` and records a JSON
manifest with its configuration, seeds and library versions.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from .artifacts import (
    RunPaths,
    format_table,
    load_checkpoint,
    load_dataset,
    load_explainability,
    load_neighborhoods,
    load_propensity,
    load_split,
    read_json,
    save_checkpoint,
    save_dataset,
    save_explainability,
    save_neighborhoods,
    save_propensity,
    save_split,
    write_manifest,
    write_report,
)
from .constants import (
    DEFAULT_ORACLE_DRAWS,
    DEFAULT_ORACLE_ETA,
    DEFAULT_ORACLE_ITEMS,
    DEFAULT_ORACLE_USERS,
    DEFAULT_SPARSITY_THRESHOLDS,
    DEFAULT_SWEEP_ETAS,
    DEFAULT_UNBIASED_CUTOFF,
    ENV_DATA_DIR,
    EXIT_OK,
    EXIT_USAGE,
    PACKAGE_VERSION,
)
from .dataset import (
    binarize_and_index,
    dataset_stats,
    filter_min_interactions,
    load_interactions,
    load_rated_testset,
    loo_split,
)
from .errors import DataError, ExplainableBPRError, UsageError
from .evaluation import evaluate_model, evaluate_unbiased_testset
from .experiment import (
    PhaseInputs,
    hyperparameter_search,
    phase_inputs,
    retrain_merged,
    sparsity_study,
    summarize,
    sweep_eta,
)
from .explainability import average_explainability, build_explainability, build_neighborhoods
from .oracle import expected_estimator_loss, generate_world, measure_bias, render_oracle_report
from .propensity import build_propensity
from .schemas import LossKind, RunConfig, TrainingConfig
from .service import RecommenderService
from .training import train

logger = logging.getLogger(__name__)

SEARCHED_FIELDS = ("latent_dim", "batch_size", "l2")
FLAG_ALIASES = {"data_path": ["--data"], "output_dir": ["--output", "-o"]}

# ==========================================
# CONFIGURATION
# ==========================================


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}", code="BAD_ARGUMENTS")


def _unescape(key: str, value: str) -> str:
    if key == "delimiter":
        return value.encode("utf-8").decode("unicode_escape")
    return value


def read_config_file(path: str) -> Dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise UsageError(f"Cannot read config file {path}: {e}", code="BAD_CONFIG")
    values: Dict[str, str] = {}
    for number, line in enumerate(lines, start=1):
        line = line.split(" #", 1)[0].strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in RunConfig.model_fields:
            raise UsageError(
                f"{path}:{number}: expected 'key = value' with a known key, got {line.strip()!r}",
                code="BAD_CONFIG",
            )
        values[key] = _unescape(key, value.strip())
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then flags."""
    values: Dict[str, object] = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in RunConfig.model_fields:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            if isinstance(flag_value, str):
                flag_value = _unescape(name, flag_value)
            values[name] = flag_value
    return RunConfig(**values)


def resolve_data_path(value: Optional[str]) -> Path:
    """Use ``value`` as given, or under ``$EBPR_DATA_DIR`` when relative and absent."""
    if not value:
        raise UsageError("No dataset given; pass --data or set data_path", code="NO_DATA")
    path = Path(value)
    data_dir = os.getenv(ENV_DATA_DIR)
    if not path.exists() and not path.is_absolute() and data_dir:
        candidate = Path(data_dir) / path
        if candidate.exists():
            return candidate
    return path


def _config_parent() -> argparse.ArgumentParser:
    parent = _ArgumentParser(add_help=False)
    parent.add_argument("--config", help="Flat key = value configuration file")
    parent.add_argument("--log-level", default="INFO", help="Logging level (default INFO)")
    for name, field in RunConfig.model_fields.items():
        flags = FLAG_ALIASES.get(name, []) + ["--" + name.replace("_", "-")]
        if field.annotation is bool:
            parent.add_argument(
                *flags, dest=name, default=None, action=argparse.BooleanOptionalAction
            )
        else:
            parent.add_argument(*flags, dest=name, default=None, help=field.description)
    return parent


def _int_list(value: str) -> List[int]:
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parent = _config_parent()
    parser = _ArgumentParser(
        prog="explainable-bpr",
        description="Explainable and debiased pairwise ranking experiments",
    )
    parser.add_argument("--version", action="version", version=PACKAGE_VERSION)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    sub.add_parser("ingest", parents=[parent], help="Load, binarize and index a log")
    sub.add_parser("split", parents=[parent], help="Leave-one-out split with negatives")
    sub.add_parser("precompute", parents=[parent], help="Neighborhoods, E and propensities")
    sub.add_parser("tune", parents=[parent], help="Random hyperparameter search")
    sub.add_parser("train", parents=[parent], help="Train replicate models")
    evaluate = sub.add_parser("evaluate", parents=[parent], help="Metric report")
    evaluate.add_argument("--testset", help="Randomly-assigned rated test set")
    sweep = sub.add_parser("sweep", parents=[parent], help="Neighborhood size sweep")
    sweep.add_argument("--etas", type=_int_list, default=DEFAULT_SWEEP_ETAS)
    study = sub.add_parser("sparsity-study", parents=[parent], help="Average E vs sparsity")
    study.add_argument("--thresholds", type=_int_list, default=DEFAULT_SPARSITY_THRESHOLDS)

    explain = sub.add_parser("explain", parents=[parent], help="Explain recommendations")
    explain.add_argument("--user", required=True, help="Raw user id")
    explain.add_argument("--item", help="Raw item id (default: explain the top-K)")
    explain.add_argument("--replicate", type=int, default=0)

    oracle = sub.add_parser("oracle", parents=[parent], help="Estimator bias check")
    oracle.add_argument("--users", type=int, default=DEFAULT_ORACLE_USERS)
    oracle.add_argument("--items", type=int, default=DEFAULT_ORACLE_ITEMS)
    oracle.add_argument("--oracle-eta", type=int, default=DEFAULT_ORACLE_ETA)
    oracle.add_argument("--draws", type=int, default=DEFAULT_ORACLE_DRAWS)
    oracle.add_argument("--triples", choices=["admissible", "all"], default="admissible")
    oracle.add_argument(
        "--free-theta",
        action="store_true",
        help="Draw exposure per item instead of per neighborhood block",
    )

    sub.add_parser("pipeline", parents=[parent], help="ingest through evaluate")
    return parser


# ==========================================
# SUBCOMMANDS
# ==========================================


def _manifest(paths: RunPaths, command: str, config: RunConfig, ds=None, **extra) -> None:
    seeds = {"split_seed": config.split_seed, "seed": config.seed}
    loss = extra.pop("loss", None)
    write_manifest(
        paths.manifest(command, loss),
        command,
        config.model_dump(mode="json"),
        seeds,
        ds=ds,
        extra=extra,
    )


def _load_split(paths: RunPaths):
    return load_split(paths.split, load_dataset(paths.directory))


def _training_inputs(paths: RunPaths, config: RunConfig) -> PhaseInputs:
    neighborhoods = load_neighborhoods(paths.neighborhoods("training"))
    E = load_explainability(paths.explainability("training"))
    propensity = load_propensity(paths.propensity)
    if E.eta != config.eta or propensity.eta != config.eta:
        raise UsageError(
            f"Precomputed artifacts use eta={E.eta}, config has eta={config.eta}; "
            "run `explainable-bpr precompute` again",
            code="STALE_ARTIFACT",
        )
    return PhaseInputs(neighborhoods=neighborhoods, explainability=E, propensity=propensity)


def _tuned_config(paths: RunPaths, config: RunConfig) -> Optional[Dict[str, object]]:
    path = paths.search(LossKind(config.loss).value)
    if not path.exists():
        return None
    return read_json(path, "tune")


def cmd_ingest(config: RunConfig, args: argparse.Namespace) -> int:
    paths = RunPaths(config.output_dir).ensure()
    records, rejected = load_interactions(
        resolve_data_path(config.data_path), config.interaction_format()
    )
    binary = binarize_and_index(records, config.threshold)
    ds = filter_min_interactions(binary, config.min_interactions)
    if ds.interaction_count == 0:
        raise DataError(
            "No interactions left after binarization and filtering", code="EMPTY_DATASET"
        )
    save_dataset(ds, paths.directory)
    stats = dataset_stats(ds)
    text = format_table(
        ["users", "items", "interactions", "sparsity", "rejected_lines"],
        [[stats.users, stats.items, stats.interactions, stats.sparsity, len(rejected)]],
    )
    text_path, _ = paths.report("ingest")
    text_path.write_text(text, encoding="utf-8")
    print(f"users={stats.users} items={stats.items} interactions={stats.interactions}")
    _manifest(paths, "ingest", config, ds=ds, rejected_lines=len(rejected))
    return EXIT_OK


def cmd_split(config: RunConfig, args: argparse.Namespace) -> int:
    paths = RunPaths(config.output_dir)
    ds = load_dataset(paths.directory)
    split = loo_split(ds, config.n_eval_negatives, config.split_seed)
    save_split(split, paths.split)
    print(f"split: {split.train.interaction_count} training interactions, {ds.n_users} users")
    _manifest(paths, "split", config, ds=ds)
    return EXIT_OK


def cmd_precompute(config: RunConfig, args: argparse.Namespace) -> int:
    paths = RunPaths(config.output_dir)
    split = _load_split(paths)
    averages = {}
    for phase, data in (("training", split.train), ("evaluation", split.full)):
        neighborhoods = build_neighborhoods(data, config.eta)
        E = build_explainability(data, neighborhoods, source=phase)
        save_neighborhoods(neighborhoods, paths.neighborhoods(phase))
        save_explainability(E, paths.explainability(phase))
        averages[phase] = average_explainability(E, data)
        if phase == "training":
            propensity = build_propensity(
                data, neighborhoods, config.propensity_variant, config.propensity_floor
            )
            save_propensity(propensity, paths.propensity)
    print(
        f"eta={config.eta} average E: training={averages['training']:.4f} "
        f"evaluation={averages['evaluation']:.4f}"
    )
    _manifest(paths, "precompute", config, ds=split.full, average_explainability=averages)
    return EXIT_OK


def cmd_tune(config: RunConfig, args: argparse.Namespace) -> int:
    paths = RunPaths(config.output_dir)
    split = _load_split(paths)
    inputs = _training_inputs(paths, config)
    result = hyperparameter_search(
        split,
        config.training_config(),
        n_configs=config.n_configs,
        replicates=config.search_replicates,
        seed=config.seed,
        E=inputs.explainability,
        propensity=inputs.propensity,
    )
    loss = LossKind(config.loss).value
    trials = [
        {
            **{name: getattr(trial.config, name) for name in SEARCHED_FIELDS},
            "scores": trial.scores,
            "best_epochs": trial.best_epochs,
        }
        for trial in result.trials
    ]
    _manifest(paths, "tune", config, ds=split.full, loss=loss)
    write_manifest(
        paths.search(loss),
        "tune",
        config.model_dump(mode="json"),
        {"seed": config.seed},
        ds=split.full,
        extra={
            "best": {name: getattr(result.best_config, name) for name in SEARCHED_FIELDS},
            "best_epoch": result.best_epoch,
            "trials": trials,
        },
    )
    best = result.best_config.model_dump(include=set(SEARCHED_FIELDS))
    print(f"{loss}: best {best} after {result.best_epoch} epochs")
    return EXIT_OK


def _run_config(config: RunConfig, tuned: Optional[Dict[str, object]]) -> TrainingConfig:
    overrides = dict(tuned["best"]) if tuned else {}
    return config.training_config(**overrides)


def cmd_train(config: RunConfig, args: argparse.Namespace) -> int:
    paths = RunPaths(config.output_dir)
    split = _load_split(paths)
    tuned = _tuned_config(paths, config)
    training_config = _run_config(config, tuned)
    loss = LossKind(config.loss).value

    if tuned:
        best_epoch = int(tuned["best_epoch"])
        inputs = phase_inputs(
            split.merged().train, config.eta, config.propensity_variant, config.propensity_floor
        )
    else:
        best_epoch = None
        inputs = _training_inputs(paths, config)

    epochs = []
    for replicate in range(config.replicates):
        run_config = training_config.model_copy(update={"seed": config.seed + replicate})
        if best_epoch is None:
            model, history = train(split, run_config, inputs.explainability, inputs.propensity)
        else:
            model, history = retrain_merged(
                split, run_config, best_epoch, inputs.explainability, inputs.propensity
            )
        save_checkpoint(model, paths.checkpoint(loss, replicate))
        epochs.append(history.epochs)
        logger.info("Replicate %d of %s trained for %d epochs", replicate, loss, history.epochs)

    print(f"{loss}: trained {config.replicates} replicates")
    _manifest(
        paths,
        "train",
        config,
        ds=split.full,
        loss=loss,
        training_config=training_config.model_dump(mode="json"),
        merged=tuned is not None,
        best_epoch=best_epoch,
        epochs=epochs,
        replicate_seeds=[config.seed + r for r in range(config.replicates)],
    )
    return EXIT_OK


def cmd_evaluate(config: RunConfig, args: argparse.Namespace) -> int:
    paths = RunPaths(config.output_dir)
    split = _load_split(paths)
    E = load_explainability(paths.explainability("evaluation"))
    propensity = load_propensity(paths.propensity)
    loss = LossKind(config.loss).value

    models = [load_checkpoint(paths.checkpoint(loss, r)) for r in range(config.replicates)]
    summaries = [
        summarize(
            [evaluate_model(m, split, E, propensity, config.cutoff, loss=loss) for m in models],
            loss=loss,
        )
    ]
    testset_path = getattr(args, "testset", None)
    if testset_path:
        testset = load_rated_testset(
            resolve_data_path(testset_path), split.full, config.interaction_format()
        )
        reports = [
            evaluate_unbiased_testset(
                m, testset, DEFAULT_UNBIASED_CUTOFF, config.relevance_threshold
            )
            for m in models
        ]
        summaries.append(summarize(reports, loss=loss))

    text_path, rows_path = paths.report(f"report_{loss}")
    print(write_report(summaries, text_path, rows_path), end="")
    _manifest(
        paths,
        "evaluate",
        config,
        ds=split.full,
        loss=loss,
        metrics={s.protocol: s.mean for s in summaries},
    )
    return EXIT_OK


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> int:
    paths = RunPaths(config.output_dir)
    split = _load_split(paths)
    tuned = _tuned_config(paths, config)
    results = sweep_eta(split, _run_config(config, tuned), args.etas, config.replicates)
    loss = LossKind(config.loss).value
    summaries = [
        summary.model_copy(update={"loss": f"{loss}@eta={eta}"}) for eta, summary in results.items()
    ]
    text_path, rows_path = paths.report(f"sweep_{loss}")
    print(write_report(summaries, text_path, rows_path), end="")
    _manifest(paths, "sweep", config, ds=split.full, loss=loss, etas=list(args.etas))
    return EXIT_OK


def cmd_sparsity_study(config: RunConfig, args: argparse.Namespace) -> int:
    paths = RunPaths(config.output_dir)
    ds = load_dataset(paths.directory)
    rows = sparsity_study(ds, args.thresholds, config.eta)
    headers = ["threshold", "users", "items", "interactions", "sparsity", "average_E"]
    values = [
        [r.threshold, r.users, r.items, r.interactions, r.sparsity, r.average_explainability]
        for r in rows
    ]
    text = format_table(headers, values)
    text_path, rows_path = paths.report("sparsity_study")
    text_path.write_text(text, encoding="utf-8")
    lines = ["\t".join(headers)] + ["\t".join(repr(v) for v in row) for row in values]
    rows_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(text, end="")
    _manifest(paths, "sparsity-study", config, ds=ds, thresholds=list(args.thresholds))
    return EXIT_OK


def cmd_explain(config: RunConfig, args: argparse.Namespace) -> int:
    service = RecommenderService.from_artifacts(
        config.output_dir, LossKind(config.loss).value, args.replicate
    )
    if args.item:
        print(service.explain(args.user, args.item).render())
        return EXIT_OK
    for rank, explanation in enumerate(service.recommend(args.user, config.cutoff), start=1):
        print(f"{rank:>3}. {explanation.render()}")
    return EXIT_OK


def cmd_oracle(config: RunConfig, args: argparse.Namespace) -> int:
    paths = RunPaths(config.output_dir).ensure()
    world = generate_world(
        args.users,
        args.items,
        args.oracle_eta,
        seed=config.seed,
        block_constant_theta=not args.free_theta,
    )
    measurements = [
        measure_bias(world, kind, args.draws, seed=config.seed, triples=args.triples)
        for kind in (LossKind.PUEBPR, LossKind.UEBPR)
    ]
    expected = {
        kind.value: expected_estimator_loss(world, kind, args.triples)
        for kind in (LossKind.PUEBPR, LossKind.UEBPR)
    }
    text = render_oracle_report(world, measurements, expected=expected)
    text_path, _ = paths.report("oracle")
    text_path.write_text(text, encoding="utf-8")
    print(text, end="")
    _manifest(
        paths,
        "oracle",
        config,
        measurements=[m.model_dump() for m in measurements],
        world={"users": args.users, "items": args.items, "eta": args.oracle_eta},
    )
    return EXIT_OK


def cmd_pipeline(config: RunConfig, args: argparse.Namespace) -> int:
    for step in (cmd_ingest, cmd_split, cmd_precompute, cmd_tune, cmd_train, cmd_evaluate):
        step(config, args)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "ingest": cmd_ingest,
    "split": cmd_split,
    "precompute": cmd_precompute,
    "tune": cmd_tune,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "sparsity-study": cmd_sparsity_study,
    "explain": cmd_explain,
    "oracle": cmd_oracle,
    "pipeline": cmd_pipeline,
}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
        level = str(args.log_level).upper()
        if not isinstance(logging.getLevelName(level), int):
            raise UsageError(f"Unknown log level {args.log_level!r}", code="BAD_ARGUMENTS")
        logging.basicConfig(
            level=level,
            format="%(asctime)s %(name)s %(levelname)s %(message)s",
        )
        config = resolve_config(args)
        if config.deterministic and config.n_workers > 1:
            config = config.model_copy(update={"n_workers": 1})
        return COMMANDS[args.command](config, args)
    except ExplainableBPRError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"error: invalid configuration\n{e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
