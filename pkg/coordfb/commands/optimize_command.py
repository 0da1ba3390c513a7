from argparse import ArgumentParser, Namespace
import logging
from typing import Any, Dict

from coordfb.aux_opt import OptimizerConfig, brute_force_oracle, maximize, oracle_spacing
from coordfb.commands.base_command import BaseCommand
from coordfb.config import DEFAULT_MAX_ITERATIONS, DEFAULT_RESTARTS, DEFAULT_SEED
from coordfb.exceptions import AuxiliaryFreeSettingError
from coordfb.settings import (
    SettingId,
    feedback_gap_entropy_form,
    feedback_gap_sc,
    validate_decomposition,
    verdict,
)

logger = logging.getLogger(__name__)


class OptimizeCommand(BaseCommand):
    """
    Maximize the objective of a setting with an auxiliary variable
    """

    name = "optimize"
    help = "maximize the auxiliary-variable objective of a problem file"

    @classmethod
    def add_arguments(cls, parser: ArgumentParser) -> None:
        parser.add_argument("file", help="problem file (JSON)")
        parser.add_argument("--setting-override", type=SettingId, choices=list(SettingId), default=None,
                            help="optimize under another setting than the file's")
        parser.add_argument("--cardinality", type=int, default=None, help="auxiliary alphabet size")
        parser.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
        parser.add_argument("--max-iterations", type=int, default=DEFAULT_MAX_ITERATIONS)
        parser.add_argument("--grid-oracle", type=int, default=None, metavar="GRID",
                            help="also run the brute-force oracle at spacing 1/GRID")
        parser.add_argument("--compare-feedback", action="store_true",
                            help="with SC_ENC_NOFB, report how much channel feedback gains")
        parser.add_argument("--seed", type=int, default=DEFAULT_SEED)

    def execute(self, args: Namespace) -> Dict[str, Any]:
        problem = self.load(args.file)
        setting = args.setting_override or problem.setting
        if setting.aux is None:
            raise AuxiliaryFreeSettingError(f"{setting.value}: setting has no auxiliary variable")

        cfg = OptimizerConfig(
            aux_cardinality=args.cardinality,
            restarts=args.restarts,
            max_iterations=args.max_iterations,
            seed=args.seed,
        )
        solution = maximize(setting, problem, cfg)
        results: Dict[str, Any] = {"solution": solution.to_dict(), "verdict": verdict(solution.value)}

        if args.grid_oracle is not None:
            oracle = brute_force_oracle(setting, problem, solution.aux_cardinality, args.grid_oracle)
            results["oracle"] = {
                **oracle.to_dict(),
                "grid_spacing": oracle_spacing(args.grid_oracle),
                "difference": solution.value - oracle.value,
            }
            logger.info(f"Multistart {solution.value:.6f} vs oracle {oracle.value:.6f}")

        if args.compare_feedback and setting is SettingId.SC_ENC_NOFB:
            target = problem.target()
            if validate_decomposition(SettingId.SC_ENC_FB, target, problem).passed:
                results["feedback_gap"] = feedback_gap_sc(target, solution, problem)
                results["feedback_gap_entropy_form"] = feedback_gap_entropy_form(target, solution)
            else:
                logger.warning("Target does not decompose for SC_ENC_FB, feedback gap skipped")
        return results
