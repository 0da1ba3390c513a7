from argparse import ArgumentParser, Namespace
import logging
from typing import Any, Dict

from coordfb.aux_opt import OptimizerConfig, maximize
from coordfb.commands.base_command import BaseCommand
from coordfb.config import (
    DEFAULT_BLOCK_LENGTH,
    DEFAULT_BLOCKS,
    DEFAULT_COORD_TOL,
    DEFAULT_DELTA,
    DEFAULT_RESTARTS,
    DEFAULT_SEED,
    DEFAULT_TRIALS,
)
from coordfb.coord_sim import Scheme, SimConfig, estimate_error_probability, run_session, trace_frame
from coordfb.exceptions import DecompositionError, PreconditionError
from coordfb.settings import SettingId, embed_w_equals_x, validate_decomposition

logger = logging.getLogger(__name__)

SIMULATED = (SettingId.SC_ENC_FB, SettingId.CAUSAL_ENC_FB)


class SimulateCommand(BaseCommand):
    """
    Run the block-Markov scheme on a problem and estimate its error probability

    Strictly causal encoding sends the W = X codewords directly. Causal
    encoding first maximizes its objective and codes over the resulting W.
    """

    name = "simulate"
    help = "simulate the block-Markov coordination scheme"

    @classmethod
    def add_arguments(cls, parser: ArgumentParser) -> None:
        parser.add_argument("file", help="problem file (JSON)")
        parser.add_argument("--n", type=int, default=DEFAULT_BLOCK_LENGTH, help="block length")
        parser.add_argument("--blocks", type=int, default=DEFAULT_BLOCKS, help="number of blocks B")
        parser.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
        parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
        parser.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="rate margin")
        parser.add_argument("--rate", type=float, default=None, help="code rate, defaults to the window midpoint")
        parser.add_argument("--scheme", type=Scheme, choices=list(Scheme), default=None)
        parser.add_argument("--coord-tol", type=float, default=DEFAULT_COORD_TOL)
        parser.add_argument("--typ-tol", type=float, default=None)
        parser.add_argument("--fixed-codebook", action="store_true", help="reuse one codebook for every trial")
        parser.add_argument("--cardinality", type=int, default=None, help="auxiliary alphabet size for causal encoding")
        parser.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
        parser.add_argument("--trace-out", default=None, help="write the first session as CSV")

    def execute(self, args: Namespace) -> Dict[str, Any]:
        problem = self.load(args.file)
        setting = problem.setting
        if setting not in SIMULATED:
            raise PreconditionError(f"{setting.value}: only encoder-side feedback settings can be simulated")

        target = problem.target()
        report = validate_decomposition(setting, target, problem)
        if not report.passed:
            labels = ", ".join(label for label, _ in report.violations)
            raise DecompositionError(f"{setting.value} decomposition violated: {labels}", report)

        scheme = args.scheme or (Scheme.W_EQUALS_X if setting is SettingId.SC_ENC_FB else Scheme.GENERIC_W)
        if scheme is Scheme.W_EQUALS_X:
            extended = embed_w_equals_x(target)
        else:
            cfg = OptimizerConfig(aux_cardinality=args.cardinality, restarts=args.restarts, seed=args.seed)
            extended = maximize(SettingId.CAUSAL_ENC_FB, problem, cfg).extended

        sim_cfg = SimConfig(
            n=args.n,
            B=args.blocks,
            delta=args.delta,
            rate_override=args.rate,
            typ_tol=args.typ_tol,
            coord_tol=args.coord_tol,
            seed=args.seed,
            trials=args.trials,
            scheme=scheme,
            fixed_codebook=args.fixed_codebook,
        )
        summary = estimate_error_probability(problem, extended, sim_cfg)
        results = {"setting": setting.value, "scheme": scheme.value, **summary.to_dict()}

        if args.trace_out:
            trace, _ = run_session(problem, extended, sim_cfg)
            trace_frame(trace).to_csv(args.trace_out, index=False)
            logger.info(f"Session trace written to {args.trace_out}")
            results["trace_file"] = args.trace_out
        return results
