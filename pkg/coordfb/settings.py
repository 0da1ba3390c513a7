"""
Coding settings, their decomposition validators, and the information
constraints and objectives evaluated on a fixed distribution.

Base variables are U (source), X (channel input), Y (channel output) and
V (decoder output). Settings with an auxiliary variable evaluate extended
distributions over (U, aux, X, Y, V).
"""

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from coordfb.config import INFO_TOL
from coordfb.exceptions import (
    AdmissibilityError,
    DecompositionError,
    DomainError,
    ProblemError,
    ShapeMismatchError,
    VariableMismatchError,
)
from coordfb.prob_core import (
    Alphabet,
    JointDist,
    Kernel,
    condition,
    entropy,
    joint_from_factors,
    marginalize,
    mutual_information,
    reorder,
    total_variation,
)

if TYPE_CHECKING:
    from coordfb.aux_opt import AuxSolution

logger = logging.getLogger(__name__)

U, X, Y, V = "U", "X", "Y", "V"
BASE = (U, X, Y, V)


class SettingId(str, Enum):
    SC_ENC_FB = "SC_ENC_FB"  # strictly causal encoding, channel feedback
    CAUSAL_ENC_FB = "CAUSAL_ENC_FB"  # causal encoding, channel feedback
    SC_ENC_NOFB = "SC_ENC_NOFB"  # strictly causal encoding, no feedback
    SC_DEC_NOFB = "SC_DEC_NOFB"  # strictly causal decoding, no source feedback
    SC_DEC_FB = "SC_DEC_FB"  # strictly causal decoding, source feedback
    CAUSAL_DEC_FB = "CAUSAL_DEC_FB"  # causal decoding, source feedback

    @property
    def aux(self) -> Optional[str]:
        return AUX_VARIABLE[self]


AUX_VARIABLE: Dict[SettingId, Optional[str]] = {
    SettingId.SC_ENC_FB: None,
    SettingId.CAUSAL_ENC_FB: "W",
    SettingId.SC_ENC_NOFB: "W2",
    SettingId.SC_DEC_NOFB: "W1",
    SettingId.SC_DEC_FB: None,
    SettingId.CAUSAL_DEC_FB: "W3",
}

# (coefficient, a, b, given): the objective is the sum of coefficient * I(a; b | given)
OBJECTIVE_TERMS: Dict[SettingId, Tuple[Tuple[float, Tuple[str, ...], Tuple[str, ...], Tuple[str, ...]], ...]] = {
    SettingId.SC_ENC_FB: ((1.0, (X,), (Y,), ()), (-1.0, (U,), (V,), (X, Y))),
    SettingId.CAUSAL_ENC_FB: ((1.0, ("W",), (Y,), ()), (-1.0, (U,), (V,), ("W", Y))),
    SettingId.SC_ENC_NOFB: ((1.0, (X,), (Y,), ()), (-1.0, (U,), ("W2",), (X,))),
    SettingId.SC_DEC_NOFB: ((1.0, ("W1",), (Y,), (V,)), (-1.0, (U,), (V, "W1"), ())),
    SettingId.SC_DEC_FB: ((1.0, (X,), (Y,), (U, V)), (-1.0, (U,), (V,), ())),
    SettingId.CAUSAL_DEC_FB: ((1.0, (X,), (Y,), (U, "W3")), (-1.0, (U,), ("W3",), ())),
}

# Independence and Markov conditions of each admissible set, as (label, a, b, given)
# with the residual I(a; b | given).
ADMISSIBILITY_CONDITIONS: Dict[SettingId, Tuple[Tuple[str, Tuple[str, ...], Tuple[str, ...], Tuple[str, ...]], ...]] = {
    SettingId.CAUSAL_ENC_FB: (
        ("U independent of W", (U,), ("W",), ()),
        ("Y - X - (U,W)", (Y,), (U, "W"), (X,)),
        ("V - (U,Y,W) - X", (V,), (X,), (U, Y, "W")),
    ),
    SettingId.SC_ENC_NOFB: (
        ("U independent of X", (U,), (X,), ()),
        ("Y - X - (U,W2)", (Y,), (U, "W2"), (X,)),
        ("V - (X,Y,W2) - U", (V,), (U,), (X, Y, "W2")),
    ),
    SettingId.SC_DEC_NOFB: (("Y - X - (U,V,W1)", (Y,), (U, V, "W1"), (X,)),),
    SettingId.CAUSAL_DEC_FB: (
        ("Y - X - (U,W3)", (Y,), (U, "W3"), (X,)),
        ("V - (Y,W3) - (U,X)", (V,), (U, X), (Y, "W3")),
    ),
}

SOURCE_MARGINAL = "source marginal"
CHANNEL_CONSISTENCY = "channel consistency"
U_INDEPENDENT_OF_X = "U independent of X"
Y_X_U = "Y - X - U"
V_UX_Y = "V - (U,X) - Y"
TARGET_MARGINAL = "target marginal"
VARIABLE_SET = "variable set"

ACHIEVABLE = "achievable"
NOT_ACHIEVABLE = "not-achievable"
UNDETERMINED = "undetermined"


def canonical_order(setting: SettingId) -> Tuple[str, ...]:
    """Variable order of extended distributions: (U, aux, X, Y, V)"""
    aux = AUX_VARIABLE[setting]
    return BASE if aux is None else (U, aux, X, Y, V)


def entropy_terms(setting: SettingId) -> List[Tuple[float, Tuple[str, ...]]]:
    """The objective of `setting` expanded into signed joint entropies"""
    terms = []
    for coef, a, b, given in OBJECTIVE_TERMS[setting]:
        terms += [
            (coef, a + given),
            (coef, b + given),
            (-coef, a + b + given),
            (-coef, given),
        ]
    return [(c, names) for c, names in terms if names]


@dataclass(frozen=True)
class CoordinationProblem:
    """
    A setting with its source, channel, and target factors.

    The input policy Q(x|u) may ignore U and the target kernel Q(v|u,x,y)
    may ignore any of its inputs. Strictly causal encoding needs a policy
    independent of U, and the strictly causal decoding settings need a kernel
    that ignores Y, so that Q(x|u) Q(v|u,x) = Q(x,v|u). The causal decoder
    reads the current channel output and may use Y. `validate_decomposition`
    reports factors that break these requirements.
    """

    setting: SettingId
    source: Kernel
    channel: Kernel
    input_policy: Kernel
    target_kernel: Kernel

    def __post_init__(self):
        object.__setattr__(self, "setting", SettingId(self.setting))
        self._check_shape("source", self.source, (), (U,))
        self._check_shape("channel", self.channel, (X,), (Y,))
        self._check_shape("input_policy", self.input_policy, (U,), (X,), subset=True)
        self._check_shape("target_kernel", self.target_kernel, (U, X, Y), (V,), subset=True)

        # Alphabet agreement between factors is enforced by the product itself
        try:
            self.joint()
        except (VariableMismatchError, ShapeMismatchError) as e:
            raise ProblemError(f"Factors do not compose: {e}") from e

    @staticmethod
    def _check_shape(label: str, kernel: Kernel, given: Tuple[str, ...], to: Tuple[str, ...], subset: bool = False):
        if kernel.to_names != to:
            raise ProblemError(f"{label} must be a kernel onto {to}, got {kernel.to_names}")
        ok = set(kernel.given_names) <= set(given) if subset else kernel.given_names == given
        if not ok:
            raise ProblemError(f"{label} may only condition on {given}, got {kernel.given_names}")

    def factors(self) -> Tuple[Kernel, ...]:
        return (self.source, self.input_policy, self.channel, self.target_kernel)

    def joint(self) -> JointDist:
        return joint_from_factors(self.factors())

    def target(self) -> JointDist:
        """The target joint distribution over (U, X, Y, V)"""
        return reorder(self.joint(), BASE)

    @property
    def alphabets(self) -> Dict[str, Alphabet]:
        return {a.name: a for a in self.target().variables}

    def with_setting(self, setting: SettingId) -> "CoordinationProblem":
        return CoordinationProblem(setting, self.source, self.channel, self.input_policy, self.target_kernel)


@dataclass(frozen=True)
class Check:
    label: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)


@dataclass(frozen=True)
class ValidationReport:
    checks: Tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def violations(self) -> Tuple[Tuple[str, float], ...]:
        return tuple((c.label, c.residual) for c in self.checks if not c.passed)

    @property
    def max_residual(self) -> float:
        return max((c.residual for c in self.checks), default=0.0)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"label": c.label, "residual": c.residual, "tolerance": c.tolerance, "passed": c.passed}
                for c in self.checks
            ],
        }


def _mi_checks(J: JointDist, conditions, tol: float) -> List[Check]:
    return [Check(label, max(mutual_information(J, a, b, given), 0.0), tol) for label, a, b, given in conditions]


def _structural_checks(setting: SettingId, J: JointDist, tol: float) -> List[Check]:
    conditions = []
    if setting in (SettingId.SC_ENC_FB, SettingId.SC_ENC_NOFB):
        conditions.append((U_INDEPENDENT_OF_X, (U,), (X,), ()))
    conditions.append((Y_X_U, (Y,), (U,), (X,)))
    if setting in (SettingId.SC_DEC_NOFB, SettingId.SC_DEC_FB):
        conditions.append((V_UX_Y, (V,), (Y,), (U, X)))
    return _mi_checks(J, conditions, tol)


def _variable_set_check(J: JointDist, expected: Sequence[str]) -> Optional[ValidationReport]:
    if set(J.names) != set(expected) or len(J.names) != len(expected):
        logger.warning(f"Expected variables {tuple(expected)}, got {J.names}")
        return ValidationReport((Check(VARIABLE_SET, 1.0, 0.0),))
    return None


def validate_decomposition(
    setting: SettingId, J: JointDist, problem: Optional[CoordinationProblem] = None, tol: float = INFO_TOL
) -> ValidationReport:
    """
    Check the decomposition a setting imposes on an achievable (U,X,Y,V) joint.

    Source-marginal and channel checks need `problem` for P_u and T; the
    independence and Markov checks are always run. Never raises.
    """
    setting = SettingId(setting)
    mismatch = _variable_set_check(J, BASE)
    if mismatch:
        return mismatch
    J = reorder(J, BASE)

    checks: List[Check] = []
    if problem is not None:
        try:
            source = JointDist(problem.source.to, problem.source.table)
            checks.append(Check(SOURCE_MARGINAL, total_variation(marginalize(J, U), source), tol))

            q_y_x = condition(marginalize(J, (X, Y)), X)
            p_x = marginalize(J, X).mass
            deviation = 0.5 * np.abs(q_y_x.table - problem.channel.table).sum(axis=1)
            checks.append(Check(CHANNEL_CONSISTENCY, float(deviation[p_x > 0].max(initial=0.0)), tol))
        except ShapeMismatchError:
            logger.warning("Problem alphabets differ from the joint's alphabets")
            return ValidationReport((Check(VARIABLE_SET, 1.0, 0.0),))

    checks += _structural_checks(setting, J, tol)
    report = ValidationReport(tuple(checks))
    if not report.passed:
        logger.info(f"{setting.value} decomposition violated: {report.violations}")
    return report


def _require_valid(setting: SettingId, J: JointDist, problem: Optional[CoordinationProblem], tol: float) -> JointDist:
    report = validate_decomposition(setting, J, problem, tol)
    if not report.passed:
        labels = ", ".join(label for label, _ in report.violations)
        raise DecompositionError(f"{setting.value} decomposition violated: {labels}", report)
    return reorder(J, BASE)


def objective_value(setting: SettingId, J: JointDist) -> float:
    """Evaluate the setting's information expression without any checks"""
    return float(sum(coef * mutual_information(J, a, b, given) for coef, a, b, given in OBJECTIVE_TERMS[setting]))


def constraint_sc_feedback(
    J: JointDist, problem: Optional[CoordinationProblem] = None, tol: float = INFO_TOL
) -> float:
    """I(X;Y) - I(U;V|X,Y) for strictly causal encoding with feedback"""
    J = _require_valid(SettingId.SC_ENC_FB, J, problem, tol)
    return objective_value(SettingId.SC_ENC_FB, J)


def constraint_sd_feedback(
    J: JointDist, problem: Optional[CoordinationProblem] = None, tol: float = INFO_TOL
) -> float:
    """I(X;Y|U,V) - I(U;V) for strictly causal decoding with source feedback"""
    J = _require_valid(SettingId.SC_DEC_FB, J, problem, tol)
    return objective_value(SettingId.SC_DEC_FB, J)


def constraint_lossy(J: JointDist) -> float:
    """I(X;Y) - I(U;V), the lossy-transmission constraint without coordination"""
    return mutual_information(J, X, Y) - mutual_information(J, U, V)


def verdict(value: float, tol: float = 1e-12) -> str:
    """Strict inequalities decide; a value at the boundary stays undetermined"""
    if value > tol:
        return ACHIEVABLE
    if value < -tol:
        return NOT_ACHIEVABLE
    return UNDETERMINED


def check_admissible(
    setting: SettingId,
    E: JointDist,
    target: JointDist,
    tol: float = INFO_TOL,
    marginal_tol: Optional[float] = None,
) -> ValidationReport:
    """
    Verify that E belongs to the admissible set of `setting` for `target`.

    Reports the total-variation residual of E's (U,X,Y,V)-marginal against
    the target and one mutual-information residual per independence or
    Markov condition of the set. Never raises.
    """
    setting = SettingId(setting)
    marginal_tol = tol if marginal_tol is None else marginal_tol
    mismatch = _variable_set_check(E, canonical_order(setting))
    if mismatch:
        return mismatch

    try:
        residual = total_variation(marginalize(E, BASE), reorder(target, BASE))
    except (ShapeMismatchError, VariableMismatchError):
        residual = 1.0
    checks = [Check(TARGET_MARGINAL, residual, marginal_tol)]

    if setting.aux is None:
        checks += _structural_checks(setting, E, tol)
    else:
        checks += _mi_checks(E, ADMISSIBILITY_CONDITIONS[setting], tol)
    return ValidationReport(tuple(checks))


def evaluate_objective(
    setting: SettingId, E: JointDist, target: Optional[JointDist] = None, tol: float = INFO_TOL
) -> float:
    """
    The setting's inner objective for a fixed extended distribution.

    Auxiliary-free settings delegate to their constraint. Without `target`,
    admissibility is checked against E's own (U,X,Y,V)-marginal.
    """
    setting = SettingId(setting)
    if setting is SettingId.SC_ENC_FB:
        return constraint_sc_feedback(E, tol=tol)
    if setting is SettingId.SC_DEC_FB:
        return constraint_sd_feedback(E, tol=tol)

    if target is None:
        names = set(E.names)
        if not set(BASE) <= names:
            raise AdmissibilityError(f"{setting.value} needs variables {canonical_order(setting)}, got {E.names}")
        target = marginalize(E, BASE)
    report = check_admissible(setting, E, target, tol)
    if not report.passed:
        labels = ", ".join(label for label, _ in report.violations)
        raise AdmissibilityError(f"{setting.value} admissibility violated: {labels}", report)
    return objective_value(setting, E)


class RateWindow(NamedTuple):
    r_min: float
    r_max: float
    feasible: bool

    @property
    def width(self) -> float:
        return self.r_max - self.r_min

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.r_min + self.r_max)


def rate_window(E: JointDist, delta: float, target: Optional[JointDist] = None, tol: float = INFO_TOL) -> RateWindow:
    """
    Rates R with I(U,Y;V|W) + delta <= R <= I(W,V;Y) - delta.

    The width equals the causal-encoding objective minus 2 delta.
    """
    if not delta > 0:
        raise DomainError(f"Rate margin delta must be positive, got {delta}")
    evaluate_objective(SettingId.CAUSAL_ENC_FB, E, target, tol)
    r_min = mutual_information(E, (U, Y), V, "W") + delta
    r_max = mutual_information(E, ("W", V), Y) - delta
    return RateWindow(r_min, r_max, r_min <= r_max)


def feedback_gap_sc(
    target: JointDist, best_nofb: "AuxSolution", problem: Optional[CoordinationProblem] = None
) -> float:
    """How much feedback enlarges the strictly causal encoding constraint"""
    return constraint_sc_feedback(target, problem) - best_nofb.value


def feedback_gap_entropy_form(target: JointDist, best_nofb: "AuxSolution") -> float:
    """H(U|V,X,Y) on the target minus H(U|X,W2) on the no-feedback solution"""
    _require_valid(SettingId.SC_ENC_FB, target, None, INFO_TOL)
    return entropy(target, U, (V, X, Y)) - entropy(best_nofb.extended, U, (X, "W2"))


def aux_alphabet(name: str, cardinality: int) -> Alphabet:
    if cardinality < 1:
        raise DomainError(f"Auxiliary cardinality must be at least 1, got {cardinality}")
    return Alphabet(name, tuple(range(cardinality)))


def _extend(target: JointDist, aux_name: str, weights: np.ndarray) -> JointDist:
    """Attach an auxiliary variable through weights[u,x,y,v,w] = Q(w | u,x,y,v)"""
    base = reorder(target, BASE)
    mass = base.mass[..., None] * weights
    mass = np.transpose(mass, (0, 4, 1, 2, 3))
    variables = (base.variables[0], aux_alphabet(aux_name, weights.shape[-1])) + base.variables[1:]
    return JointDist.normalized(variables, mass)


def embed_copy(
    target: JointDist, aux_name: str, of: Sequence[str] = (), cardinality: Optional[int] = None
) -> JointDist:
    """
    Extend `target` with an auxiliary variable equal to the tuple `of`.

    With `of` empty the auxiliary variable is constant. Extra auxiliary
    symbols beyond the tuple count carry zero mass.
    """
    base = reorder(target, BASE)
    of = tuple(of)
    sizes = [base.alphabet(n).size for n in of]
    needed = int(np.prod(sizes, dtype=int))
    cardinality = needed if cardinality is None else cardinality
    if cardinality < needed:
        raise DomainError(f"Copying {of} needs {needed} auxiliary symbols, got {cardinality}")

    grids = np.indices(base.shape)
    code = np.ravel_multi_index([grids[BASE.index(n)] for n in of], sizes) if of else np.zeros(base.shape, dtype=int)
    weights = np.zeros(base.shape + (cardinality,))
    np.put_along_axis(weights, code[..., None], 1.0, axis=-1)
    return _extend(base, aux_name, weights)


def embed_w_equals_x(target: JointDist) -> JointDist:
    """The causal-encoding extension with W := X"""
    return embed_copy(target, "W", (X,))


def strategy_witness(target: JointDist, cardinality: Optional[int] = None) -> JointDist:
    """
    Extension for the causal-encoding set where W enumerates maps U -> X.

    W is drawn independently of U with Q(w) = prod_u Q(w(u)|u) and X = W(U),
    so every condition of the set holds for any target that decomposes with
    a memoryless channel.
    """
    base = reorder(target, BASE)
    n_u, n_x = base.shape[0], base.shape[1]
    maps = list(itertools.product(range(n_x), repeat=n_u))
    cardinality = len(maps) if cardinality is None else cardinality
    if cardinality < len(maps):
        raise DomainError(f"The strategy witness needs {len(maps)} auxiliary symbols, got {cardinality}")

    q_x_u = condition(marginalize(base, (U, X)), U).table
    weights_uwx = np.zeros((n_u, cardinality, n_x))
    for w, f in enumerate(maps):
        q_w = np.prod([q_x_u[u, f[u]] for u in range(n_u)])
        for u in range(n_u):
            if q_x_u[u, f[u]] > 0:
                weights_uwx[u, w, f[u]] = q_w / q_x_u[u, f[u]]

    weights = np.broadcast_to(
        np.transpose(weights_uwx, (0, 2, 1))[:, :, None, None, :], base.shape + (cardinality,)
    )
    return _extend(base, "W", weights)


# Copy witnesses tried for each set, as tuples of copied base variables
COPY_WITNESSES: Dict[SettingId, Tuple[Tuple[str, ...], ...]] = {
    SettingId.CAUSAL_ENC_FB: ((), (X,), (V,)),
    SettingId.SC_ENC_NOFB: ((), (U,), (V,), (U, X)),
    SettingId.SC_DEC_NOFB: ((), (X,), (V,)),
    SettingId.CAUSAL_DEC_FB: ((), (V,), (U, X)),
}


def witnesses(
    setting: SettingId, target: JointDist, cardinality: int, tol: float = INFO_TOL
) -> List[Tuple[str, JointDist]]:
    """Explicitly constructed admissible extensions of `target` of the given cardinality"""
    setting = SettingId(setting)
    aux = AUX_VARIABLE[setting]
    if aux is None:
        return []
    base = reorder(target, BASE)

    candidates: List[Tuple[str, JointDist]] = []
    for of in COPY_WITNESSES[setting]:
        needed = int(np.prod([base.alphabet(n).size for n in of], dtype=int))
        if needed <= cardinality:
            label = f"{aux}=({','.join(of)})" if of else f"{aux} constant"
            candidates.append((label, embed_copy(base, aux, of, cardinality)))
    if setting is SettingId.CAUSAL_ENC_FB and base.shape[1] ** base.shape[0] <= cardinality:
        candidates.append(("W strategy", strategy_witness(base, cardinality)))

    admissible = [(label, E) for label, E in candidates if check_admissible(setting, E, base, tol).passed]
    logger.debug(f"{setting.value}: {len(admissible)} of {len(candidates)} witnesses admissible")
    return admissible
