"""
slam-fm command line
Wires SLAM parsing, encoding, training and scoring into the synth/train/evaluate/predict/dump subcommands
"""
import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from kt_errors import UsageError
from fm_model.params import MODEL_PRESETS
from fm_training.trainer import TRAIN_PRESETS
from kt_commands.data_executor import DataExecutor
from kt_commands.results import failure
from kt_commands.run_config import REFIT_MODES, parse_int_list, resolve_run_config
from kt_commands.scoring_executor import ScoringExecutor
from kt_commands.training_executor import TrainingExecutor
from slam_data.schema import FeatureSet

EXIT_OK = 0
EXIT_MODULE_ERROR = 1
EXIT_USAGE = 2

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _add_model_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key = value settings file (overridden by flags)")
    parser.add_argument("--schema", choices=[f.value for f in FeatureSet])
    parser.add_argument("--model", choices=sorted(MODEL_PRESETS))
    parser.add_argument("--protocol", choices=sorted(TRAIN_PRESETS))
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--batch", type=int)
    parser.add_argument("--embedding-dim", type=int)
    parser.add_argument("--hidden-widths", type=parse_int_list, help="comma-separated hidden layer widths")
    parser.add_argument("--link", choices=["sigmoid", "probit"])
    parser.add_argument("--final-activation", choices=["relu", "linear"])
    parser.add_argument("--dropout", type=float)
    parser.add_argument("--global-bias", action="store_true", default=None)
    parser.add_argument("--patience", type=int)
    parser.add_argument("--early-stopping-metric", choices=["auc", "nll"])
    parser.add_argument("--refit", choices=list(REFIT_MODES))
    parser.add_argument("--workers", type=int)
    parser.add_argument("--dev-fraction", type=float)


def _add_common_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int)
    parser.add_argument("--deterministic", action="store_true", default=None,
                        help="single-threaded, order-fixed reductions")
    parser.add_argument("--keep-case", action="store_true", help="do not lowercase surface tokens")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slam-fm", description="FM / DeepFM knowledge tracing on SLAM logs")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="write a synthetic Rasch dataset with ground truth")
    synth.add_argument("--users", type=int)
    synth.add_argument("--items", type=int)
    synth.add_argument("--per-user", type=int)
    synth.add_argument("--dev-fraction", type=float)
    synth.add_argument("--out", required=True)
    _add_common_flags(synth)

    train = commands.add_parser("train", help="train a model and write a checkpoint")
    train.add_argument("--train", required=True)
    train.add_argument("--dev")
    train.add_argument("--labels", help="key file for --dev")
    train.add_argument("--out", required=True)
    _add_model_flags(train)
    _add_common_flags(train)

    evaluate = commands.add_parser("evaluate", help="score labeled data with a checkpoint")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--data")
    evaluate.add_argument("--dev", help="alias of --data")
    evaluate.add_argument("--labels", help="key file for --data")
    evaluate.add_argument("--train", help="training file; its vocab hash must match the checkpoint")
    evaluate.add_argument("--schema", choices=[f.value for f in FeatureSet])
    evaluate.add_argument("--threshold", type=float)
    evaluate.add_argument("--out", help="directory for metrics.txt and manifest.json")
    _add_common_flags(evaluate)

    predict = commands.add_parser("predict", help="write token_id probability lines")
    predict.add_argument("--checkpoint", required=True)
    predict.add_argument("--data", required=True)
    predict.add_argument("--schema", choices=[f.value for f in FeatureSet])
    predict.add_argument("--out", help="output file (default stdout)")
    predict.add_argument("--manifest", help="manifest path (default <out>.manifest.json)")
    _add_common_flags(predict)

    dump = commands.add_parser("dump", help="re-emit a SLAM file in canonical form")
    dump.add_argument("--data", required=True)
    dump.add_argument("--labels")
    dump.add_argument("--out", help="output file (default stdout)")
    dump.add_argument("--manifest", help="manifest path (default <out>.manifest.json)")
    _add_common_flags(dump)

    return parser


class SlamFmCli:
    def __init__(self):
        self.data_executor = DataExecutor()
        self.training_executor = TrainingExecutor()
        self.scoring_executor = ScoringExecutor()
        self.logger = self._setup_logging()

    def _setup_logging(self):
        """Setup logging from SLAMFM_LOG_LEVEL / SLAMFM_LOG_FILE"""
        level = getattr(logging, os.getenv("SLAMFM_LOG_LEVEL", "INFO").upper(), logging.INFO)
        handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
        log_file = os.getenv("SLAMFM_LOG_FILE")
        if log_file:
            handlers.append(logging.FileHandler(log_file, mode='a'))
        logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers)
        logging.getLogger().setLevel(level)
        return logging.getLogger(__name__)

    def _run_log_handler(self, command: str, out: Optional[str]) -> Optional[logging.Handler]:
        """run.log inside --out for subcommands whose --out is a directory"""
        if not out or command not in ("synth", "train", "evaluate"):
            return None
        os.makedirs(out, exist_ok=True)
        handler = logging.FileHandler(os.path.join(out, "run.log"), mode='w')
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logging.getLogger().addHandler(handler)
        return handler

    def dispatch(self, command: str, flags: Dict[str, Any]) -> Dict[str, Any]:
        if command == "evaluate" and not flags.get("data"):
            flags["data"] = flags.get("dev")
            flags["dev"] = None
        try:
            run_config = resolve_run_config(command, flags)
        except UsageError as e:
            return failure(self.logger, e)

        handler = self._run_log_handler(command, run_config.out)
        try:
            for key, value in run_config.resolved_items():
                self.logger.info(f"config {key}={value}")
            if command in ("synth", "dump"):
                return self.data_executor.execute(command, run_config)
            elif command == "train":
                return self.training_executor.execute(run_config)
            else:
                return self.scoring_executor.execute(command, run_config)
        finally:
            if handler is not None:
                logging.getLogger().removeHandler(handler)
                handler.close()

    def run(self, argv: List[str]) -> int:
        parser = build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            return EXIT_OK if e.code in (0, None) else EXIT_USAGE

        result = self.dispatch(args.command, vars(args))
        if not result["success"]:
            print(f"error [{result['module']}]: {result['error']}", file=sys.stderr)
            return EXIT_USAGE if result["error_type"] == "UsageError" else EXIT_MODULE_ERROR

        self._print_result(args.command, result["data"])
        return EXIT_OK

    def _print_result(self, command: str, data: Dict[str, Any]):
        if command == "evaluate":
            report = data["report"]
            print(report.to_line())
            print(report.to_table())
        elif command == "predict" and data["out"] is None:
            for line in data["lines"]:
                print(line)
        elif command == "dump" and data["out"] is None:
            sys.stdout.write(data["text"])
        elif command in ("synth", "train"):
            print(f"{command} finished, artifacts in {data['out']}")


def run(argv: List[str]) -> int:
    """Run one CLI invocation and return its exit code"""
    return SlamFmCli().run(argv)
