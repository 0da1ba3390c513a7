from argparse import ArgumentParser, Namespace
import logging
from typing import Any, Dict

from coordfb.commands.base_command import BaseCommand
from coordfb.exceptions import DecompositionError
from coordfb.settings import validate_decomposition

logger = logging.getLogger(__name__)


class ValidateCommand(BaseCommand):
    """
    Check that a problem's target decomposes as its setting requires
    """

    name = "validate"
    help = "check the decomposition of a problem file"

    @classmethod
    def add_arguments(cls, parser: ArgumentParser) -> None:
        parser.add_argument("file", help="problem file (JSON)")

    def execute(self, args: Namespace) -> Dict[str, Any]:
        problem = self.load(args.file)
        report = validate_decomposition(problem.setting, problem.target(), problem)
        if not report.passed:
            labels = ", ".join(label for label, _ in report.violations)
            raise DecompositionError(f"{problem.setting.value} decomposition violated: {labels}", report)
        return {"setting": problem.setting.value, "validation": report.to_dict()}
