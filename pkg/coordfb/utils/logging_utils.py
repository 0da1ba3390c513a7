import json
import os
import logging
from datetime import datetime
from typing import Dict, Any, List, Optional

from coordfb.config import RUN_HISTORY_FILE

# Configure logger
logger = logging.getLogger(__name__)

HISTORY_LIMIT = 100


def _read_history(history_file: str) -> List[Dict[str, Any]]:
    if not os.path.exists(history_file):
        return []
    try:
        with open(history_file, "r") as f:
            events = json.load(f)
    except (json.JSONDecodeError, IOError):
        logger.warning(f"Run history {history_file} is unreadable, starting a new one")
        return []
    return events if isinstance(events, list) else []


def log_event(event_type: str, data: Dict[str, Any], history_file: Optional[str] = None) -> None:
    """
    Append an event to the run history file

    Args:
        event_type: Type of event (e.g., "run", "config")
        data: Data associated with the event
        history_file: Defaults to RUN_HISTORY_FILE
    """
    history_file = history_file or RUN_HISTORY_FILE
    event = {
        "timestamp": datetime.now().isoformat(),
        "type": event_type,
        "data": data
    }

    events = _read_history(history_file)
    events.append(event)

    # Keep only the most recent events
    with open(history_file, "w") as f:
        json.dump(events[-HISTORY_LIMIT:], f)

    logger.info(f"Logged {event_type} event to {history_file}")


def log_run(report: Dict[str, Any], history_file: Optional[str] = None) -> None:
    """
    Record a finished command in the run history

    Args:
        report: RunReport dictionary as printed by the command
        history_file: Defaults to RUN_HISTORY_FILE
    """
    log_event("run", {
        "command": report.get("command", {}).get("name"),
        "exit_code": report.get("exit_code"),
        "input_digest": report.get("input_digest"),
        "seed": report.get("seed"),
        "results": report.get("results"),
    }, history_file)


def get_recent_runs(limit: int = 10, command: str = None, history_file: Optional[str] = None) -> List[Dict[str, Any]]:
    """
    Get recent runs from the history file

    Args:
        limit: Maximum number of runs to retrieve
        command: Filter by command name (optional)
        history_file: Defaults to RUN_HISTORY_FILE

    Returns:
        List of run events, newest first
    """
    runs = [event for event in _read_history(history_file or RUN_HISTORY_FILE) if event.get("type") == "run"]

    if command:
        runs = [run for run in runs if run.get("data", {}).get("command") == command]

    # Sort by timestamp (newest first)
    runs.sort(key=lambda x: x.get("timestamp", ""), reverse=True)

    return runs[:limit]
