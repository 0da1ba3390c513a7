from argparse import ArgumentParser, Namespace
import logging
from typing import Any, Dict

from coordfb.commands.base_command import BaseCommand
from coordfb.config import DEFAULT_DELTA
from coordfb.exceptions import DecompositionError
from coordfb.settings import (
    ACHIEVABLE,
    UNDETERMINED,
    SettingId,
    constraint_lossy,
    constraint_sc_feedback,
    constraint_sd_feedback,
    embed_w_equals_x,
    objective_value,
    rate_window,
    validate_decomposition,
    verdict,
    witnesses,
)

logger = logging.getLogger(__name__)


class EvaluateCommand(BaseCommand):
    """
    Evaluate the information constraint of a problem and decide achievability

    Auxiliary-free settings get their exact constraint. Settings with an
    auxiliary variable get the best explicit witness, which only bounds the
    constraint from below.
    """

    name = "evaluate"
    help = "evaluate the information constraint of a problem file"

    @classmethod
    def add_arguments(cls, parser: ArgumentParser) -> None:
        parser.add_argument("file", help="problem file (JSON)")
        parser.add_argument("--setting-override", type=SettingId, choices=list(SettingId), default=None,
                            help="evaluate under another setting than the file's")
        parser.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="rate margin of the rate window")
        parser.add_argument("--cardinality", type=int, default=None,
                            help="auxiliary alphabet size of the witnesses")

    def execute(self, args: Namespace) -> Dict[str, Any]:
        problem = self.load(args.file)
        setting = args.setting_override or problem.setting
        if setting is not problem.setting:
            problem = problem.with_setting(setting)
        target = problem.target()

        report = validate_decomposition(setting, target, problem)
        if not report.passed:
            labels = ", ".join(label for label, _ in report.violations)
            raise DecompositionError(f"{setting.value} decomposition violated: {labels}", report)

        results: Dict[str, Any] = {"setting": setting.value, "lossy_constraint": constraint_lossy(target)}
        if setting is SettingId.SC_ENC_FB:
            value = constraint_sc_feedback(target, problem)
            window = rate_window(embed_w_equals_x(target), args.delta)
            results["rate_window"] = {"r_min": window.r_min, "r_max": window.r_max, "feasible": window.feasible}
        elif setting is SettingId.SC_DEC_FB:
            value = constraint_sd_feedback(target, problem)
        else:
            return {**results, **self._witness_bound(setting, target, args.cardinality)}

        results.update({"value": value, "verdict": verdict(value)})
        logger.info(f"{setting.value} constraint {value:.9f} bits: {results['verdict']}")
        return results

    def _witness_bound(self, setting: SettingId, target, cardinality) -> Dict[str, Any]:
        if cardinality is None:
            sizes = target.shape
            cardinality = max(sizes[1] ** sizes[0], sizes[0] * sizes[1])
        found = witnesses(setting, target, cardinality)
        if not found:
            logger.warning(f"No explicit witness is admissible for {setting.value}")
            return {"lower_bound": None, "witness": None, "verdict": UNDETERMINED}

        label, best = max(found, key=lambda item: objective_value(setting, item[1]))
        bound = objective_value(setting, best)
        # A positive lower bound certifies achievability; anything else leaves it open
        outcome = ACHIEVABLE if verdict(bound) == ACHIEVABLE else UNDETERMINED
        logger.info(f"{setting.value} witness {label} gives lower bound {bound:.9f} bits")
        return {"lower_bound": bound, "witness": label, "cardinality": cardinality, "verdict": outcome}
