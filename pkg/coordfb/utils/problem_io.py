"""
Problem files: JSON documents holding a setting, the alphabets, and the four factors.

    {
      "setting": "SC_ENC_FB",
      "alphabets": {"U": [0, 1], "X": [0, 1], "Y": [0, 1], "V": [1, 2, ...]},
      "source": [0.5, 0.5],
      "channel": [[0.9, 0.1], [0.1, 0.9]],
      "input_policy": {"given": [], "table": [0.5, 0.5]},
      "target_kernel": {"given": ["U", "X", "Y"], "table": [[[[...]]]]}
    }

Tables are nested lists with the conditioning variables first, in the order
listed under "given". Every row must sum to one within FILE_TOL; rows are
renormalized after the check.
"""

import json
import logging
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np

from coordfb.config import FILE_TOL
from coordfb.exceptions import ProblemError, ProblemFileError
from coordfb.prob_core import Alphabet, Kernel
from coordfb.settings import BASE, CoordinationProblem, SettingId, U, V, X, Y

logger = logging.getLogger(__name__)

SCALARS = (str, int, float, bool)


def _require(document: Dict[str, Any], key: str, kind, path: str = ""):
    field = f"{path}{key}"
    if key not in document:
        raise ProblemFileError(field, "missing")
    value = document[key]
    if not isinstance(value, kind):
        raise ProblemFileError(field, f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def _parse_alphabets(document: Dict[str, Any]) -> Dict[str, Alphabet]:
    raw = _require(document, "alphabets", dict)
    alphabets = {}
    for name in BASE:
        symbols = _require(raw, name, list, "alphabets.")
        field = f"alphabets.{name}"
        if not symbols:
            raise ProblemFileError(field, "alphabet is empty")
        if not all(isinstance(s, SCALARS) for s in symbols):
            raise ProblemFileError(field, "symbols must be strings or numbers")
        if len(set(symbols)) != len(symbols):
            raise ProblemFileError(field, "symbols are repeated")
        alphabets[name] = Alphabet(name, tuple(symbols))
    extra = set(raw) - set(BASE)
    if extra:
        raise ProblemFileError("alphabets", f"unknown variables {sorted(extra)}")
    return alphabets


def _stochastic(field: str, raw: Any, shape: Tuple[int, ...]) -> np.ndarray:
    """Check a nested list against `shape` and row-stochasticity, then renormalize its rows"""
    try:
        table = np.array(raw, dtype=float)
    except (TypeError, ValueError):
        raise ProblemFileError(field, "not a rectangular table of numbers") from None
    if table.shape != shape:
        raise ProblemFileError(field, f"shape {table.shape} does not match alphabets {shape}")
    if not np.isfinite(table).all():
        raise ProblemFileError(field, "entries must be finite")
    if table.min() < 0:
        index = tuple(int(i) for i in np.unravel_index(int(np.argmin(table)), shape))
        raise ProblemFileError(f"{field}{list(index)}", f"negative entry {table[index]}")

    rows = table.reshape(-1, shape[-1])
    sums = rows.sum(axis=1)
    worst = int(np.argmax(np.abs(sums - 1.0)))
    if abs(sums[worst] - 1.0) > FILE_TOL:
        row = [int(i) for i in np.unravel_index(worst, shape[:-1])] if len(shape) > 1 else []
        raise ProblemFileError(f"{field}{row}", f"row sums to {sums[worst]!r}, not 1")
    return (rows / sums[:, None]).reshape(shape)


def _parse_kernel(document: Dict[str, Any], key: str, to: str, alphabets: Dict[str, Alphabet]) -> Kernel:
    raw = _require(document, key, dict)
    given = _require(raw, "given", list, f"{key}.")
    for name in given:
        if name not in alphabets:
            raise ProblemFileError(f"{key}.given", f"unknown variable {name!r}")
    given_alphabets = tuple(alphabets[name] for name in given)
    shape = tuple(a.size for a in given_alphabets) + (alphabets[to].size,)
    table = _stochastic(f"{key}.table", _require(raw, "table", (list, int, float), f"{key}."), shape)
    try:
        return Kernel(given_alphabets, (alphabets[to],), table)
    except ValueError as e:
        raise ProblemFileError(key, str(e)) from e


def parse_problem(text: Union[str, bytes]) -> CoordinationProblem:
    """Parse a problem document, reporting the offending field of any defect"""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemFileError("document", e.msg, line=e.lineno) from e
    if not isinstance(document, dict):
        raise ProblemFileError("document", "expected a JSON object at the top level")

    setting_label = _require(document, "setting", str)
    try:
        setting = SettingId(setting_label)
    except ValueError:
        choices = ", ".join(s.value for s in SettingId)
        raise ProblemFileError("setting", f"unknown setting {setting_label!r}, expected one of {choices}") from None

    alphabets = _parse_alphabets(document)
    source = _stochastic("source", _require(document, "source", list), (alphabets[U].size,))
    channel = _stochastic("channel", _require(document, "channel", list), (alphabets[X].size, alphabets[Y].size))
    input_policy = _parse_kernel(document, "input_policy", X, alphabets)
    target_kernel = _parse_kernel(document, "target_kernel", V, alphabets)

    try:
        problem = CoordinationProblem(
            setting=setting,
            source=Kernel((), (alphabets[U],), source),
            channel=Kernel((alphabets[X],), (alphabets[Y],), channel),
            input_policy=input_policy,
            target_kernel=target_kernel,
        )
    except ProblemError as e:
        raise ProblemFileError("document", str(e)) from e
    logger.debug(f"Parsed {setting.value} problem with alphabets {[a.size for a in alphabets.values()]}")
    return problem


def load_problem(path: str) -> Tuple[CoordinationProblem, bytes]:
    """Read and parse a problem file, returning the raw bytes alongside for digests"""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise ProblemFileError("file", f"cannot read {path}: {e.strerror}") from e
    return parse_problem(data), data


def _symbols(alphabet: Alphabet) -> Sequence[Any]:
    return [s.item() if isinstance(s, np.generic) else s for s in alphabet.symbols]


def problem_to_dict(problem: CoordinationProblem) -> Dict[str, Any]:
    alphabets = problem.alphabets
    return {
        "setting": problem.setting.value,
        "alphabets": {name: _symbols(alphabets[name]) for name in BASE},
        "source": problem.source.table.tolist(),
        "channel": problem.channel.table.tolist(),
        "input_policy": {"given": list(problem.input_policy.given_names), "table": problem.input_policy.table.tolist()},
        "target_kernel": {
            "given": list(problem.target_kernel.given_names),
            "table": problem.target_kernel.table.tolist(),
        },
    }


def dump_problem(problem: CoordinationProblem) -> str:
    return json.dumps(problem_to_dict(problem), indent=2)
