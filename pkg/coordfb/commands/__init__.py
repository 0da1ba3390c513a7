from coordfb.commands.base_command import BaseCommand
from coordfb.commands.validate_command import ValidateCommand
from coordfb.commands.evaluate_command import EvaluateCommand
from coordfb.commands.optimize_command import OptimizeCommand
from coordfb.commands.simulate_command import SimulateCommand
from coordfb.commands.example_command import ExampleCommand

COMMANDS = [ValidateCommand, EvaluateCommand, OptimizeCommand, SimulateCommand, ExampleCommand]

__all__ = [
    "BaseCommand",
    "ValidateCommand",
    "EvaluateCommand",
    "OptimizeCommand",
    "SimulateCommand",
    "ExampleCommand",
    "COMMANDS",
]
