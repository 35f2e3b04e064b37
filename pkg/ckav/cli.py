"""Provides the ``ckav`` command-line interface.

Every subcommand writes its machine-readable result (JSON or CSV) to stdout or to
the file named by ``--out``/``--report``; diagnostics go to stderr. Exit codes are
0 on success, 1 for usage errors, 2 for invalid data and 3 for I/O failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, Callable, NoReturn

from ckav import __version__
from ckav.averaging import (
    GradStepConfig,
    TemperatureConfig,
    WeightVector,
    explicit_weights,
    gradient_step_average,
    ppl_softmax_weights,
    uniform_weights,
    weighted_average,
)
from ckav.checkpoint import Checkpoint
from ckav.container import EXTENSION, read_checkpoint, read_series, write_checkpoint
from ckav.exceptions import AveragingUsageError, CkavError
from ckav.objectives import (
    MlpObjective,
    Objective,
    QuadraticObjective,
    QuadraticTaskSpec,
    ToyModelSpec,
    read_dataset,
    sample_quadratic_checkpoints,
    write_dataset,
)
from ckav.records import OutputFormat, SweepRecord, format_records, write_records
from ckav.selection import SelectionKind, SelectionStrategy, make_strategy
from ckav.sweep import (
    DEFAULT_ETAS,
    DEFAULT_GRAD_TAU,
    DEFAULT_RESOLUTION,
    DEFAULT_TAUS,
    SimplexGridSpec,
    eta_sweep_grad,
    eta_sweep_optimize,
    k_sweep,
    series_records,
    simplex_flatness,
    simplex_grid,
    temp_sweep,
)
from ckav.training import (
    DEFAULT_N_DEV,
    DEFAULT_N_TRAIN,
    AdamConfig,
    make_toy_task,
    train_with_checkpoints,
)
from ckav.weight_optimizer import OptimizeConfig, one_step_optimize

logger = logging.getLogger(__name__)

#: Environment variable consulted when ``--threads`` is not given
THREADS_ENV = "CKAV_THREADS"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3

_LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)

#: Keys that mark a spec file as a quadratic task
_QUADRATIC_KEYS = frozenset({"dim", "center", "noise_sigma", "num_checkpoints"})


class UsageError(Exception):
    """Raised when a command line cannot be parsed or is inconsistent."""

    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


class _StderrHandler(logging.StreamHandler):  # type: ignore[type-arg]
    pass


def grid(text: str) -> list[float]:
    """Parses a grid given as a comma-separated list or a JSON array of numbers."""
    text = text.strip()
    values = json.loads(text) if text.startswith("[") else text.split(",")
    if not isinstance(values, list) or len(values) == 0:
        raise ValueError(f"not a list of numbers: {text!r}")
    return [float(v) for v in values]


def _configure_logging(verbosity: int) -> None:
    package_logger = logging.getLogger("ckav")
    for handler in list(package_logger.handlers):
        if isinstance(handler, _StderrHandler):
            package_logger.removeHandler(handler)
    handler = _StderrHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    package_logger.addHandler(handler)
    package_logger.setLevel(_LOG_LEVELS[min(verbosity, len(_LOG_LEVELS) - 1)])


def _threads(args: argparse.Namespace) -> int:
    threads = args.threads
    if threads is None:
        text = os.environ.get(THREADS_ENV, "1")
        try:
            threads = int(text)
        except ValueError:
            message = f"{THREADS_ENV} must be an integer, got {text!r}"
            raise UsageError(message) from None
    if threads < 1:
        raise UsageError("threads must be at least 1")
    return int(threads)


def _load_json(path: str) -> dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        values = json.load(f)
    if not isinstance(values, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return values


def _dump(payload: Any) -> str:
    return json.dumps(payload, indent=2) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")
        logger.info("wrote %s", out)


def _is_quadratic(values: dict[str, Any]) -> bool:
    return not _QUADRATIC_KEYS.isdisjoint(values)


def _objective(args: argparse.Namespace) -> Objective:
    values = _load_json(args.spec)
    if _is_quadratic(values):
        return QuadraticObjective(QuadraticTaskSpec.from_dict(values).center)
    if args.dev is None:
        raise UsageError("--dev is required to evaluate a toy model spec")
    return MlpObjective(ToyModelSpec.from_dict(values), read_dataset(args.dev))


def _read_each(args: argparse.Namespace) -> list[Checkpoint]:
    return [read_checkpoint(path, args.allow_nonfinite) for path in args.checkpoints]


def _series_and_strategy(
    args: argparse.Namespace,
) -> tuple[list[Checkpoint], SelectionStrategy]:
    series = read_series(args.checkpoints, args.allow_nonfinite)
    k = len(series) if args.k is None else args.k
    return series, make_strategy(args.select, k)


def _read_selected(args: argparse.Namespace) -> list[Checkpoint]:
    series, strategy = _series_and_strategy(args)
    selected = strategy.select([ckpt.meta for ckpt in series])
    steps = [series[i].meta.step for i in selected]
    logger.info("%s (k=%d) selected steps %s", strategy.kind.value, strategy.k, steps)
    return selected.take(series)


def _size(values: dict[str, Any], key: str, default: int) -> int:
    value = values.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValueError(f"{key} must be a positive integer, got {value!r}")
    return value


def _train_toy(args: argparse.Namespace) -> None:
    values = _load_json(args.spec) if args.spec else {}
    if _is_quadratic(values):
        raise ValueError("train-toy needs a toy model spec, got a quadratic task")
    spec = ToyModelSpec.from_dict(values)
    adam = _load_json(args.adam) if args.adam else {}
    adam.setdefault("seed", args.seed)
    cfg = AdamConfig.from_dict(adam)
    train_data, dev = make_toy_task(
        spec,
        n_train=_size(values, "n_train", DEFAULT_N_TRAIN),
        n_dev=_size(values, "n_dev", DEFAULT_N_DEV),
        seed=args.seed,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(out / f"data-train{EXTENSION}", train_data)
    write_dataset(out / f"data-dev{EXTENSION}", dev)
    metas = train_with_checkpoints(spec, train_data, dev, cfg, out)
    _emit(
        _dump(
            {
                "out_dir": str(out),
                "train": str(out / f"data-train{EXTENSION}"),
                "dev": str(out / f"data-dev{EXTENSION}"),
                "spec": spec.to_dict(),
                "adam": cfg.to_dict(),
                "checkpoints": [meta.to_dict() for meta in metas],
            }
        ),
        None,
    )


def _gen_quadratic(args: argparse.Namespace) -> None:
    values = _load_json(args.spec)
    values.setdefault("seed", args.seed)
    spec = QuadraticTaskSpec.from_dict(values)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metas = sample_quadratic_checkpoints(spec, out)
    _emit(
        _dump(
            {
                "out_dir": str(out),
                "spec": spec.to_dict(),
                "checkpoints": [meta.to_dict() for meta in metas],
            }
        ),
        None,
    )


def _inspect(args: argparse.Namespace) -> None:
    ckpt = read_checkpoint(args.checkpoint, args.allow_nonfinite)
    payload = {
        "path": args.checkpoint,
        "meta": ckpt.meta.to_dict(),
        "has_grads": ckpt.has_grads,
        "all_finite": ckpt.params.all_finite(),
        "num_params": ckpt.params.size,
        "tensors": {name: list(shape) for name, shape in ckpt.params.shapes.items()},
    }
    _emit(_dump(payload), None)


def _average_weights(args: argparse.Namespace, ckpts: list[Checkpoint]) -> WeightVector:
    if args.weights is not None:
        return explicit_weights(args.weights)
    if args.scheme == "uniform":
        return uniform_weights(len(ckpts))
    missing = [i for i, ckpt in enumerate(ckpts) if ckpt.meta.dev_ppl is None]
    if missing:
        raise AveragingUsageError(
            f"dev_ppl required for ppl-softmax weights, missing in {missing}"
        )
    ppls = [ckpt.meta.dev_ppl for ckpt in ckpts if ckpt.meta.dev_ppl is not None]
    return ppl_softmax_weights(ppls, TemperatureConfig(args.tau))


def _average(args: argparse.Namespace) -> None:
    if args.weights is not None and args.select is not None:
        raise UsageError("--weights cannot be combined with --select")
    if args.k is not None and args.select is None:
        raise UsageError("--k requires --select")
    ckpts = _read_each(args) if args.select is None else _read_selected(args)
    w = _average_weights(args, ckpts)
    threads = _threads(args)
    if args.grad_step is None:
        tag = args.scheme if args.weights is None else "explicit"
        result = weighted_average(ckpts, w, threads, tag=tag)
    else:
        cfg = GradStepConfig(args.grad_step)
        result = gradient_step_average(ckpts, w, cfg, threads, tag="gradient-step")
    write_checkpoint(args.out, result)
    logger.info("averaged %d checkpoints into %s", len(ckpts), args.out)
    payload = {
        "out": args.out,
        "steps": [ckpt.meta.step for ckpt in ckpts],
        "weights": list(w),
        "meta": result.meta.to_dict(),
    }
    _emit(_dump(payload), None)


def _optimize_weights(args: argparse.Namespace) -> None:
    ckpts = _read_each(args)
    w, report = one_step_optimize(ckpts, _objective(args), OptimizeConfig(args.eta))
    if args.out is not None:
        optimized = weighted_average(ckpts, w, _threads(args), tag="optimized")
        write_checkpoint(args.out, optimized)
        logger.info("wrote optimized average to %s", args.out)
    payload = {
        "steps": [ckpt.meta.step for ckpt in ckpts],
        "eta": args.eta,
        "weights": list(w),
        **report.to_dict(),
    }
    _emit(_dump(payload), args.report)


def _eval(args: argparse.Namespace) -> None:
    ckpt = read_checkpoint(args.checkpoint, args.allow_nonfinite)
    objective = _objective(args)
    evaluation = objective.evaluate(ckpt.params)
    payload: dict[str, Any] = {"dev_loss": evaluation.loss, "dev_ppl": evaluation.ppl}
    if isinstance(objective, MlpObjective):
        payload["accuracy"] = objective.accuracy(ckpt.params)
    _emit(_dump(payload), None)


def _emit_records(
    args: argparse.Namespace,
    records: list[SweepRecord],
    summary: dict[str, Any] | None = None,
) -> None:
    if args.out is None:
        sys.stdout.write(format_records(records, args.format, summary))
    else:
        write_records(records, args.out, args.format, summary)
        logger.info("wrote %d records to %s", len(records), args.out)


def _sweep_k(args: argparse.Namespace) -> None:
    series = read_series(args.checkpoints, args.allow_nonfinite)
    k_max = len(series) if args.k_max is None else args.k_max
    records = k_sweep(series, args.select, k_max, _objective(args), _threads(args))
    _emit_records(args, records)


def _sweep_temp(args: argparse.Namespace) -> None:
    series, strategy = _series_and_strategy(args)
    taus = DEFAULT_TAUS if args.grid is None else args.grid
    records = temp_sweep(series, strategy, taus, _objective(args), _threads(args))
    _emit_records(args, records)


def _sweep_grad_eta(args: argparse.Namespace) -> None:
    series, strategy = _series_and_strategy(args)
    etas = DEFAULT_ETAS if args.grid is None else args.grid
    records = eta_sweep_grad(
        series, strategy, args.tau, etas, _objective(args), _threads(args)
    )
    _emit_records(args, records)


def _sweep_opt_eta(args: argparse.Namespace) -> None:
    ckpts = _read_each(args) if args.select is None else _read_selected(args)
    etas = DEFAULT_ETAS if args.grid is None else args.grid
    records = eta_sweep_optimize(ckpts, etas, _objective(args), _threads(args))
    _emit_records(args, records)


def _sweep_simplex(args: argparse.Namespace) -> None:
    if len(args.checkpoints) != 3:
        raise UsageError("sweep simplex takes exactly 3 checkpoints")
    c1, c2, c3 = _read_each(args)
    grid_spec = SimplexGridSpec(args.resolution)
    records = simplex_grid(c1, c2, c3, grid_spec, _objective(args), _threads(args))
    flatness = simplex_flatness(records)
    print(
        f"interior spread {flatness.interior_spread}, "
        f"grid spread {flatness.grid_spread}",
        file=sys.stderr,
    )
    _emit_records(args, records, flatness.to_dict())


def _sweep_series(args: argparse.Namespace) -> None:
    series = read_series(args.checkpoints, args.allow_nonfinite)
    _emit_records(args, series_records(series, _objective(args), _threads(args)))


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        help=f"maximum worker threads (default: ${THREADS_ENV} or 1)",
    )
    common.add_argument(
        "--seed", type=int, default=0, help="seed for all random number generation"
    )
    common.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="log progress to stderr (-vv for debug output)",
    )
    common.add_argument(
        "--allow-nonfinite",
        action="store_true",
        help="accept checkpoints holding NaN or infinite values",
    )
    common.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    return common


def _objective_options() -> argparse.ArgumentParser:
    options = argparse.ArgumentParser(add_help=False)
    options.add_argument(
        "--spec", required=True, help="toy model or quadratic task spec (JSON)"
    )
    options.add_argument("--dev", help="development dataset container")
    return options


def _selection_options(default: str | None) -> argparse.ArgumentParser:
    options = argparse.ArgumentParser(add_help=False)
    options.add_argument(
        "--select",
        choices=[kind.value for kind in SelectionKind],
        default=default,
        help="checkpoint selection rule",
    )
    options.add_argument(
        "--k", type=int, default=None, help="number of checkpoints to select"
    )
    return options


def _sweep_options() -> argparse.ArgumentParser:
    options = argparse.ArgumentParser(add_help=False)
    options.add_argument("--out", help="output file (default: stdout)")
    options.add_argument(
        "--format",
        choices=[fmt.value for fmt in OutputFormat],
        default=OutputFormat.CSV.value,
        help="output table format",
    )
    options.add_argument("checkpoints", nargs="+", help="checkpoint files")
    return options


def build_parser() -> argparse.ArgumentParser:
    """Builds the argument parser of the ``ckav`` command."""
    parser = _Parser(
        prog="ckav",
        description="Average, optimize and sweep checkpoint interpolations.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    common = _common_options()
    objective = _objective_options()
    formatter = argparse.ArgumentDefaultsHelpFormatter

    def command(
        subparsers: Any,
        name: str,
        handler: Callable[[argparse.Namespace], None],
        help_text: str,
        parents: Sequence[argparse.ArgumentParser] = (),
    ) -> argparse.ArgumentParser:
        sub: argparse.ArgumentParser = subparsers.add_parser(
            name,
            help=help_text,
            description=help_text,
            parents=[common, *parents],
            formatter_class=formatter,
        )
        sub.set_defaults(handler=handler)
        return sub

    train = command(commands, "train-toy", _train_toy, "train the toy classifier")
    train.add_argument("--spec", help="toy model spec (JSON)")
    train.add_argument("--adam", help="Adam settings (JSON)")
    train.add_argument("--out-dir", required=True, help="checkpoint directory")

    quadratic = command(
        commands, "gen-quadratic", _gen_quadratic, "sample a quadratic series"
    )
    quadratic.add_argument("--spec", required=True, help="quadratic task spec (JSON)")
    quadratic.add_argument("--out-dir", required=True, help="checkpoint directory")

    inspect = command(commands, "inspect", _inspect, "describe a checkpoint")
    inspect.add_argument("checkpoint", help="checkpoint file")

    average = command(
        commands,
        "average",
        _average,
        "average checkpoints",
        parents=[_selection_options(None)],
    )
    average.add_argument(
        "--scheme", choices=["uniform", "ppl-softmax"], default="uniform"
    )
    average.add_argument("--tau", type=float, default=1.0, help="softmax temperature")
    average.add_argument("--grad-step", type=float, default=None, help="step size η")
    average.add_argument("--weights", type=grid, default=None, help="w1,w2,...")
    average.add_argument("--out", required=True, help="output checkpoint file")
    average.add_argument("checkpoints", nargs="+", help="checkpoint files")

    optimize = command(
        commands,
        "optimize-weights",
        _optimize_weights,
        "optimize interpolation weights on development data",
        parents=[objective],
    )
    optimize.add_argument("--eta", type=float, default=1.0, help="logit step size")
    optimize.add_argument("--report", help="report file (default: stdout)")
    optimize.add_argument("--out", help="also write the optimized average here")
    optimize.add_argument("checkpoints", nargs="+", help="checkpoint files")

    evaluate = command(
        commands, "eval", _eval, "evaluate a checkpoint", parents=[objective]
    )
    evaluate.add_argument("checkpoint", help="checkpoint file")

    sweep = commands.add_parser(
        "sweep",
        help="sweep averaging hyperparameters",
        description="sweep averaging hyperparameters",
    )
    sweep.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sweeps = sweep.add_subparsers(dest="sweep", metavar="SWEEP", required=True)
    table = _sweep_options()

    k = command(
        sweeps,
        "k",
        _sweep_k,
        "uniform averages over growing selections",
        parents=[objective, table],
    )
    k.add_argument(
        "--select",
        choices=[kind.value for kind in SelectionKind],
        default=SelectionKind.TOP_K.value,
        help="checkpoint selection rule",
    )
    k.add_argument("--k-max", type=int, default=None, help="largest K")

    temp = command(
        sweeps,
        "temp",
        _sweep_temp,
        "perplexity-softmax averages over temperatures",
        parents=[
            objective,
            table,
            _selection_options(SelectionKind.LAST_K_FROM_BEST.value),
        ],
    )
    temp.add_argument("--grid", type=grid, default=None, help="temperatures")

    grad_eta = command(
        sweeps,
        "grad-eta",
        _sweep_grad_eta,
        "gradient-step averages over step sizes",
        parents=[objective, table, _selection_options(SelectionKind.TOP_K.value)],
    )
    grad_eta.add_argument("--tau", type=float, default=DEFAULT_GRAD_TAU)
    grad_eta.add_argument("--grid", type=grid, default=None, help="step sizes")

    opt_eta = command(
        sweeps,
        "opt-eta",
        _sweep_opt_eta,
        "optimized interpolation weights over logit step sizes",
        parents=[objective, table, _selection_options(None)],
    )
    opt_eta.add_argument("--grid", type=grid, default=None, help="step sizes")

    simplex = command(
        sweeps,
        "simplex",
        _sweep_simplex,
        "averages of three checkpoints on a barycentric grid",
        parents=[objective, table],
    )
    simplex.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)

    command(
        sweeps,
        "series",
        _sweep_series,
        "development loss of every checkpoint",
        parents=[objective, table],
    )
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Runs the ``ckav`` command.

    Args:
        argv: Command-line arguments, without the program name.

    Returns:
        The exit code.
    """
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args.verbose)
        args.handler(args)
    except SystemExit as e:
        return EXIT_OK if e.code is None else int(e.code)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (CkavError, ValueError) as e:
        print(f"ckav: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"ckav: error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main() -> NoReturn:
    """Entry point of the ``ckav`` console script."""
    sys.exit(run())
