from abc import ABC, abstractmethod
from argparse import ArgumentParser, Namespace
from datetime import datetime
import logging
import sys
import time
from typing import Any, Dict, Optional, TextIO

from coordfb.config import ENABLE_RUN_HISTORY
from coordfb.exceptions import CoordinationError
from coordfb.settings import CoordinationProblem
from coordfb.utils.logging_utils import log_run
from coordfb.utils.problem_io import load_problem
from coordfb.utils.report_utils import build_report, input_digest, render

logger = logging.getLogger(__name__)


class BaseCommand(ABC):
    """
    Base class for all coordfb subcommands
    """

    name = ""
    help = ""

    def __init__(self):
        self.last_execution = None
        self.input_bytes: Optional[bytes] = None
        logger.debug(f"Initializing {self.name} command")

    @classmethod
    @abstractmethod
    def add_arguments(cls, parser: ArgumentParser) -> None:
        """
        Register the command's flags

        Args:
            parser: the subcommand's parser
        """
        pass

    @abstractmethod
    def execute(self, args: Namespace) -> Dict[str, Any]:
        """
        Execute the command

        Returns:
            dict: the results section of the RunReport
        """
        pass

    def load(self, path: str) -> CoordinationProblem:
        problem, self.input_bytes = load_problem(path)
        logger.info(f"Loaded {problem.setting.value} problem from {path}")
        return problem

    def command_echo(self, args: Namespace) -> Dict[str, Any]:
        flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("handler", "timing", "history")}
        return {"name": self.name, "flags": flags}

    def run(self, args: Namespace, out: Optional[TextIO] = None) -> int:
        """
        Execute the command and print its RunReport

        Returns:
            int: process exit code
        """
        start = time.perf_counter()
        exit_code = 0
        try:
            results = self.execute(args)
        except CoordinationError as e:
            exit_code = e.exit_code
            results = {"error": type(e).__name__, "message": str(e)}
            report = getattr(e, "report", None)
            if report is not None:
                results["validation"] = report.to_dict()
            logger.error(f"{self.name} failed: {e}")
        except Exception as e:
            exit_code = 3
            results = {"error": type(e).__name__, "message": str(e)}
            logger.exception(f"{self.name} failed unexpectedly")

        wall_time = time.perf_counter() - start if getattr(args, "timing", False) else None
        report = build_report(
            self.command_echo(args),
            input_digest(self.input_bytes),
            results,
            getattr(args, "seed", None),
            exit_code,
            wall_time,
        )
        print(render(report), file=out or sys.stdout)

        if ENABLE_RUN_HISTORY or getattr(args, "history", False):
            log_run(report)
        self.log_execution(exit_code)
        return exit_code

    def log_execution(self, exit_code: int):
        """
        Log the execution result

        Args:
            exit_code: the code the process will exit with
        """
        self.last_execution = datetime.now()
        if exit_code == 0:
            logger.info(f"{self.name} command completed")
        else:
            logger.error(f"{self.name} command exited with code {exit_code}")
