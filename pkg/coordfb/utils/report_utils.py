import hashlib
import json
import logging
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np

logger = logging.getLogger(__name__)


def input_digest(data: Optional[bytes]) -> Optional[str]:
    """sha256 of the command's input file, None for commands without one"""
    if data is None:
        return None
    return hashlib.sha256(data).hexdigest()


def build_report(
    command: Dict[str, Any],
    digest: Optional[str],
    results: Dict[str, Any],
    seed: Optional[int],
    exit_code: int,
    wall_time: Optional[float] = None,
) -> Dict[str, Any]:
    """
    Assemble a RunReport

    Args:
        command: name and parsed flags of the command
        digest: sha256 of the input file
        results: command-specific results
        seed: seed every random draw of the run derives from
        exit_code: process exit code
        wall_time: seconds, only included when requested

    Returns:
        The report as a plain dictionary
    """
    report = {
        "command": command,
        "input_digest": digest,
        "results": results,
        "seed": seed,
        "exit_code": exit_code,
    }
    if wall_time is not None:
        report["wall_time"] = wall_time
    return report


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (set, frozenset, tuple)):
        return list(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def render(report: Dict[str, Any]) -> str:
    """Stable JSON text: sorted keys, full float precision"""
    return json.dumps(report, indent=2, sort_keys=True, default=_jsonable)
