from argparse import ArgumentParser, Namespace
import logging
import os
from typing import Any, Dict

from coordfb.binary_example import (
    ExampleParams,
    alpha_star,
    check_noise,
    constraint_closed_form,
    emit_curves,
    lossy_alpha_star,
    make_target,
    lossy_constraint,
)
from coordfb.commands.base_command import BaseCommand
from coordfb.exceptions import RangeError
from coordfb.settings import SettingId
from coordfb.utils.problem_io import dump_problem

logger = logging.getLogger(__name__)

CURVE = "curve"
ALPHA_STAR = "alpha-star"
EMIT_PROBLEM = "emit-problem"


class ExampleCommand(BaseCommand):
    """
    The binary source over a binary symmetric channel: curves, threshold, problem files
    """

    name = "example"
    help = "binary source / binary symmetric channel example"

    @classmethod
    def add_arguments(cls, parser: ArgumentParser) -> None:
        actions = parser.add_subparsers(dest="action", required=True)

        curve = actions.add_parser(CURVE, help="constraint curves as CSV")
        curve.add_argument("--epsilon", type=float, default=0.1, help="channel flip probability")
        curve.add_argument("--grid", type=int, default=100, help="points per curve")
        curve.add_argument("--out", default=".", help="directory for the CSV files")

        threshold = actions.add_parser(ALPHA_STAR, help="smallest achievable alpha")
        threshold.add_argument("--epsilon", type=float, default=0.1, help="channel flip probability")

        emit = actions.add_parser(EMIT_PROBLEM, help="write the example as a problem file")
        emit.add_argument("--alpha", type=float, default=0.4)
        emit.add_argument("--epsilon", type=float, default=0.1, help="channel flip probability")
        emit.add_argument("--setting", type=SettingId, choices=list(SettingId), default=SettingId.SC_ENC_FB)
        emit.add_argument("--out", default="problem.json", help="problem file to write")

    def execute(self, args: Namespace) -> Dict[str, Any]:
        if args.action == CURVE:
            return self._curve(args)
        if args.action == ALPHA_STAR:
            check_noise(args.epsilon)
            return {"epsilon": args.epsilon, "alpha_star": alpha_star(args.epsilon),
                    "lossy_alpha_star": lossy_alpha_star(args.epsilon)}
        return self._emit(args)

    def _curve(self, args: Namespace) -> Dict[str, Any]:
        if not os.path.isdir(args.out):
            raise RangeError("--out", f"{args.out} is not a directory")
        curve, sweep = emit_curves(args.epsilon, args.grid, args.out)
        alphas, values = curve["alpha"].tolist(), curve["coord_constraint"].tolist()
        bracket = None
        for i in range(1, len(values)):
            if values[i - 1] < 0 <= values[i]:
                bracket = [alphas[i - 1], alphas[i]]
                break
        return {
            "epsilon": args.epsilon,
            "rows": len(curve),
            "sign_change": bracket,
            "files": [os.path.join(args.out, "constraint_curve.csv"), os.path.join(args.out, "alpha_star.csv")],
            "alpha_star_rows": len(sweep),
        }

    def _emit(self, args: Namespace) -> Dict[str, Any]:
        params = ExampleParams(args.alpha, args.epsilon)
        problem = make_target(params, args.setting)
        with open(args.out, "w") as f:
            f.write(dump_problem(problem))
        logger.info(f"Problem written to {args.out}")
        return {
            "file": args.out,
            "alpha": args.alpha,
            "epsilon": args.epsilon,
            "constraint_closed_form": constraint_closed_form(params),
            "lossy_constraint": lossy_constraint(params),
        }
