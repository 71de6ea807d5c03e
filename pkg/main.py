"""
cfrag - Main Entry Point
Collaborative-filtering-augmented retrieval for personalized generation.
"""

import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

from corpus.dataset import save_dataset
from pipeline.config import PipelineConfig, add_config_arguments, build_config, overrides_from_args
from pipeline.evaluation import run_eval
from pipeline.grid import run_grid
from pipeline.report import load_report
from pipeline.synthetic import SyntheticSpec, generate_synthetic
from pipeline.training import run_train
from utils.errors import CfragError
from utils.helpers import make_rng
from utils.log import configure_logging

logger = logging.getLogger("cfrag")


class App:
    """
    Command-line application that dispatches subcommands.
    """

    def __init__(self):
        """Initialize the parser and the command table."""
        self.commands = {
            "synth": self.synth,
            "train-user": lambda config, args: run_train(config, ("user",)),
            "train-retriever": lambda config, args: run_train(config, ("retriever",)),
            "train-reranker": lambda config, args: run_train(config, ("reranker",)),
            "train": lambda config, args: run_train(config),
            "eval": self.evaluate,
            "report": self.report,
            "grid": lambda config, args: run_grid(config),
        }
        self.parser = self._build_parser()

    def _build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog="cfrag", description=__doc__.strip().splitlines()[-1])
        parser.add_argument("--config", help="flat key = value config file")
        parser.add_argument("-v", "--verbose", action="count", default=0)
        parser.add_argument("-q", "--quiet", action="count", default=0)
        subparsers = parser.add_subparsers(dest="command", required=True)
        for name in self.commands:
            sub = subparsers.add_parser(name)
            add_config_arguments(sub)
            if name == "synth":
                sub.add_argument("--clusters", type=int, default=SyntheticSpec.clusters)
                sub.add_argument("--users-per-cluster", type=int, default=SyntheticSpec.users_per_cluster)
                sub.add_argument("--history-length", type=int, default=SyntheticSpec.history_length)
                sub.add_argument("--samples-per-user", type=int, default=SyntheticSpec.samples_per_user)
                sub.add_argument("--sigma", type=float, default=SyntheticSpec.sigma)
        return parser

    def synth(self, config: PipelineConfig, args: argparse.Namespace):
        """Write a synthetic dataset to config.dataset and its oracle beside it."""
        spec = SyntheticSpec(
            clusters=args.clusters,
            users_per_cluster=args.users_per_cluster,
            history_length=args.history_length,
            samples_per_user=args.samples_per_user,
            sigma=args.sigma,
        )
        profiles, samples, oracle = generate_synthetic(spec, make_rng(config.seed))
        save_dataset(config.dataset, profiles, samples)
        oracle.save(config.oracle_path())
        print(f"Wrote {len(profiles)} users and {len(samples)} samples to {config.dataset}")

    def evaluate(self, config: PipelineConfig, args: argparse.Namespace):
        self._print_variants(run_eval(config).variants)

    def report(self, config: PipelineConfig, args: argparse.Namespace):
        report = load_report(config.run_dir)
        for stage, trace in report.stages.items():
            if trace:
                print(f"{stage}: {len(trace)} steps, loss {trace[0]:.4f} -> {trace[-1]:.4f}")
        self._print_variants(report.variants)

    def _print_variants(self, variants):
        for variant, metrics in variants.items():
            print(f"{variant:22s} " + "  ".join(f"{k}={v:.4f}" for k, v in metrics.items()))

    def run(self, argv: Optional[List[str]] = None) -> int:
        """
        Parse arguments and run one command.

        Returns:
            Process exit status
        """
        args = self.parser.parse_args(argv)
        configure_logging(args.verbose - args.quiet)
        try:
            config = build_config(args.config, overrides_from_args(args))
            self.commands[args.command](config, args)
        except CfragError as exc:
            logger.error("%s", exc)
            return 1
        return 0


def main():
    """
    Entry point for the CLI.
    Loads .env, then creates and runs the application.
    """
    load_dotenv()
    sys.exit(App().run())


if __name__ == "__main__":
    main()
