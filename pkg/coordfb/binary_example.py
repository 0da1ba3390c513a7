"""
Binary source over a binary symmetric channel, with eight decoder outputs.

U, X and Y are uniform bits, the channel flips X with probability `noise`,
and the target puts mass 1 - alpha on the output v = 1 + 4u + 2x + y matched
to (u, x, y) and alpha/7 on each of the other seven outputs. The closed form
of the feedback constraint for this family anchors the generic evaluators.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from scipy.optimize import bisect

from coordfb.exceptions import RangeError
from coordfb.prob_core import Alphabet, Kernel, binary_entropy
from coordfb.settings import CoordinationProblem, SettingId, U, V, X, Y

logger = logging.getLogger(__name__)

ALPHA_MAX = 7.0 / 8.0
NOISE_MAX = 0.5
ROOT_XTOL = 1e-6
SCAN_POINTS = 64

BITS = (0, 1)
OUTPUTS = tuple(range(1, 9))


@dataclass(frozen=True)
class ExampleParams:
    alpha: float
    noise: float

    def __post_init__(self):
        check_alpha(self.alpha)
        check_noise(self.noise)


def check_alpha(alpha: float):
    if not 0.0 <= alpha <= ALPHA_MAX:
        raise RangeError("--alpha", f"alpha must lie in [0, 7/8], got {alpha}")


def check_noise(noise: float):
    if not 0.0 <= noise <= NOISE_MAX:
        raise RangeError("--epsilon", f"noise must lie in [0, 0.5], got {noise}")


def output_symbol(u: int, x: int, y: int) -> int:
    """The decoder output matched to (u, x, y)"""
    return 1 + 4 * u + 2 * x + y


def make_target(params: ExampleParams, setting: SettingId = SettingId.SC_ENC_FB) -> CoordinationProblem:
    """The binary example as a coordination problem"""
    a_u, a_x, a_y, a_v = Alphabet(U, BITS), Alphabet(X, BITS), Alphabet(Y, BITS), Alphabet(V, OUTPUTS)
    eps = params.noise
    channel = np.array([[1 - eps, eps], [eps, 1 - eps]])

    table = np.full((2, 2, 2, 8), params.alpha / 7.0)
    for u in BITS:
        for x in BITS:
            for y in BITS:
                table[u, x, y, output_symbol(u, x, y) - 1] = 1.0 - params.alpha

    return CoordinationProblem(
        setting=setting,
        source=Kernel((), (a_u,), np.array([0.5, 0.5])),
        channel=Kernel((a_x,), (a_y,), channel),
        input_policy=Kernel((), (a_x,), np.array([0.5, 0.5])),
        target_kernel=Kernel((a_u, a_x, a_y), (a_v,), table),
    )


def constraint_closed_form(params: ExampleParams) -> float:
    """H_b(alpha) - H_b(eps) - H_b(6 alpha/7) + alpha (log2 7 - 6/7 log2 3)"""
    a = params.alpha
    return (
        binary_entropy(a)
        - binary_entropy(params.noise)
        - binary_entropy(6.0 * a / 7.0)
        + a * (math.log2(7.0) - 6.0 / 7.0 * math.log2(3.0))
    )


def lossy_constraint(params: ExampleParams) -> float:
    """H_b(alpha) - H_b(eps), the constraint of lossy transmission"""
    return binary_entropy(params.alpha) - binary_entropy(params.noise)


def _smallest_root(f, hi: float) -> float:
    """Smallest sign change of f on [0, hi], refined by bisection; 0 or hi when there is none"""
    if f(0.0) >= 0:
        return 0.0
    if f(hi) <= 0:
        return hi
    grid = np.linspace(0.0, hi, SCAN_POINTS + 1)
    values = [f(a) for a in grid]
    for lo_a, hi_a, lo_v, hi_v in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
        if lo_v < 0 <= hi_v:
            return float(bisect(f, lo_a, hi_a, xtol=ROOT_XTOL)) if hi_v > 0 else float(hi_a)
    return hi


def alpha_star(noise: float) -> float:
    """Smallest alpha for which the feedback constraint turns non-negative"""
    check_noise(noise)
    return _smallest_root(lambda a: constraint_closed_form(ExampleParams(a, noise)), ALPHA_MAX)


def lossy_alpha_star(noise: float) -> float:
    """Smallest alpha for which the lossy-transmission constraint turns non-negative; equals noise"""
    check_noise(noise)
    return _smallest_root(lambda a: lossy_constraint(ExampleParams(a, noise)), NOISE_MAX)


def constraint_curve(noise: float, grid: int) -> pd.DataFrame:
    """Both constraints at `grid` equally spaced alphas spanning [0, 7/8]"""
    check_noise(noise)
    if grid < 2:
        raise RangeError("--grid", f"grid must be at least 2, got {grid}")
    alphas = np.linspace(0.0, ALPHA_MAX, grid)
    rows = [ExampleParams(float(a), noise) for a in alphas]
    return pd.DataFrame(
        {
            "alpha": alphas,
            "coord_constraint": [constraint_closed_form(p) for p in rows],
            "lossy_constraint": [lossy_constraint(p) for p in rows],
        }
    )


def alpha_star_curve(grid: int) -> pd.DataFrame:
    """alpha* at `grid` equally spaced noise levels spanning [0, 0.5]"""
    if grid < 2:
        raise RangeError("--grid", f"grid must be at least 2, got {grid}")
    noises = np.linspace(0.0, NOISE_MAX, grid)
    return pd.DataFrame({"epsilon": noises, "alpha_star": [alpha_star(float(e)) for e in noises]})


def emit_curves(noise: float, grid: int, out_dir: Optional[str] = None):
    """
    The constraint curve at `noise` and the alpha* sweep.

    Args:
        noise: channel flip probability of the constraint curve
        grid: number of points of both grids
        out_dir: when given, both tables are also written there as CSV

    Returns:
        (constraint curve, alpha* sweep) as DataFrames
    """
    curve = constraint_curve(noise, grid)
    sweep = alpha_star_curve(grid)
    if out_dir:
        curve.to_csv(f"{out_dir}/constraint_curve.csv", index=False, float_format="%.12g")
        sweep.to_csv(f"{out_dir}/alpha_star.csv", index=False, float_format="%.12g")
        logger.info(f"Curves written to {out_dir}")
    return curve, sweep
