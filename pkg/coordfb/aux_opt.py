"""
Maximization of the auxiliary-variable objectives over their admissible sets.

Every admissible set is a family of extended distributions that factor into
fixed kernels taken from the target and free kernels over the auxiliary
variable. `maximize` runs a seeded multistart projected ascent on the free
kernels with a quadratic penalty on target-marginal mismatch, polishes every
restart with `repair_to_admissible`, refines every candidate by a pattern
search over the auxiliary split kernel, and keeps the best admissible one.
`brute_force_oracle` enumerates a simplex grid of split kernels instead and
serves as an independent check on small instances.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import nnls
from scipy.special import entr

from coordfb.config import (
    CARDINALITY_LADDER,
    DEFAULT_FEASIBILITY_TOL,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_PENALTY_WEIGHT,
    DEFAULT_RESTARTS,
    DEFAULT_SEED,
    DEFAULT_STEP_SIZE,
    OPTIMIZER_WORKERS,
    ORACLE_MAX_PARAMS,
    ORACLE_CHUNK,
    ORACLE_MAX_POINTS,
    ORACLE_VERIFY,
    REPAIR_SWEEPS,
    SPLIT_MIN_STEP,
    SPLIT_SEED_GRID,
    SPLIT_SEED_POINTS,
    SPLIT_SEEDS,
    SPLIT_START_STEP,
    SPLIT_STENCIL_MAX,
)
from coordfb.exceptions import (
    AuxiliaryFreeSettingError,
    DomainError,
    InfeasibleParameterizationError,
    OracleSizeError,
    RepairError,
)
from coordfb.prob_core import LN2, JointDist, condition, entropy_bits, marginalize, reorder
from coordfb.settings import (
    BASE,
    CoordinationProblem,
    SettingId,
    U,
    V,
    X,
    Y,
    aux_alphabet,
    canonical_order,
    check_admissible,
    entropy_terms,
    objective_value,
    witnesses,
)

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-15
ARMIJO = 1e-4
MAX_HALVINGS = 30
SWEEP_IMPROVEMENT = 1e-10

MULTISTART = "multistart"
ORACLE = "oracle"


@dataclass(frozen=True)
class OptimizerConfig:
    """Search parameters; `aux_cardinality` of None means |U||X||Y||V| + 2"""

    aux_cardinality: Optional[int] = None
    restarts: int = DEFAULT_RESTARTS
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT
    feasibility_tol: float = DEFAULT_FEASIBILITY_TOL
    seed: int = DEFAULT_SEED
    step_size: float = DEFAULT_STEP_SIZE
    workers: int = OPTIMIZER_WORKERS

    def __post_init__(self):
        if self.aux_cardinality is not None and self.aux_cardinality < 1:
            raise DomainError(f"aux_cardinality must be at least 1, got {self.aux_cardinality}")
        if self.restarts < 1:
            raise DomainError(f"restarts must be at least 1, got {self.restarts}")
        if self.max_iterations < 0:
            raise DomainError(f"max_iterations must be non-negative, got {self.max_iterations}")
        if not self.feasibility_tol > 0:
            raise DomainError(f"feasibility_tol must be positive, got {self.feasibility_tol}")
        if not self.step_size > 0:
            raise DomainError(f"step_size must be positive, got {self.step_size}")
        if self.penalty_weight < 0:
            raise DomainError(f"penalty_weight must be non-negative, got {self.penalty_weight}")
        if self.workers < 1:
            raise DomainError(f"workers must be at least 1, got {self.workers}")

    def cardinality_for(self, target: JointDist) -> int:
        if self.aux_cardinality is not None:
            return self.aux_cardinality
        return int(np.prod(target.shape, dtype=int)) + 2


@dataclass(frozen=True)
class AuxSolution:
    extended: JointDist
    value: float
    feasibility_residual: float
    method: str
    evaluations: int
    aux_cardinality: int
    setting: SettingId
    label: str = ""

    def to_dict(self) -> dict:
        return {
            "setting": self.setting.value,
            "value": self.value,
            "feasibility_residual": self.feasibility_residual,
            "method": self.method,
            "evaluations": self.evaluations,
            "aux_cardinality": self.aux_cardinality,
            "candidate": self.label,
        }


@dataclass(frozen=True)
class FactorSpec:
    """One kernel of a factorized family; `table` is None for a free kernel"""

    given: Tuple[str, ...]
    to: Tuple[str, ...]
    table: Optional[np.ndarray] = None

    @property
    def free(self) -> bool:
        return self.table is None


def project_rows(matrix: np.ndarray) -> np.ndarray:
    """Euclidean projection of every row of `matrix` onto the probability simplex"""
    n = matrix.shape[1]
    ordered = -np.sort(-matrix, axis=1)
    cssv = np.cumsum(ordered, axis=1) - 1.0
    ind = np.arange(1, n + 1)
    rho = np.count_nonzero(ordered - cssv / ind > 0, axis=1)
    theta = cssv[np.arange(matrix.shape[0]), rho - 1] / rho
    return np.maximum(matrix - theta[:, None], 0.0)


@dataclass
class Family:
    """The factorized family of one admissible set, bound to a target and cardinality"""

    setting: SettingId
    target: JointDist
    cardinality: int
    factors: List[FactorSpec] = field(default_factory=list)

    def __post_init__(self):
        self.setting = SettingId(self.setting)
        self.aux = self.setting.aux
        if self.aux is None:
            raise AuxiliaryFreeSettingError(f"{self.setting.value} has no auxiliary variable")
        self.target = reorder(self.target, BASE)
        self.names = canonical_order(self.setting)
        self.letters = {name: "abcde"[i] for i, name in enumerate(self.names)}
        self.sizes = {a.name: a.size for a in self.target.variables}
        self.sizes[self.aux] = self.cardinality
        self.variables = (self.target.variables[0], aux_alphabet(self.aux, self.cardinality)) + self.target.variables[1:]
        self.factors = self._build_factors()
        self.terms = [(coef, tuple(self.names.index(n) for n in names)) for coef, names in entropy_terms(self.setting)]

    def _build_factors(self) -> List[FactorSpec]:
        t = self.target
        w = self.aux
        p_u = FactorSpec((), (U,), marginalize(t, U).mass)
        channel = FactorSpec((X,), (Y,), np.array(condition(marginalize(t, (X, Y)), X).table))
        if self.setting is SettingId.CAUSAL_ENC_FB:
            return [p_u, FactorSpec((), (w,)), FactorSpec((U, w), (X,)), channel, FactorSpec((U, Y, w), (V,))]
        if self.setting is SettingId.SC_ENC_NOFB:
            q_x = FactorSpec((), (X,), marginalize(t, X).mass)
            return [p_u, q_x, FactorSpec((U, X), (w,)), channel, FactorSpec((X, Y, w), (V,))]
        if self.setting is SettingId.SC_DEC_NOFB:
            q_x_u = FactorSpec((U,), (X,), np.array(condition(marginalize(t, (U, X)), U).table))
            q_v_ux = FactorSpec((U, X), (V,), np.array(condition(marginalize(t, (U, X, V)), (U, X)).table))
            return [p_u, q_x_u, q_v_ux, FactorSpec((U, X, V), (w,)), channel]
        return [p_u, FactorSpec((U,), (X, w)), channel, FactorSpec((Y, w), (V,))]

    def shape_of(self, spec: FactorSpec) -> Tuple[int, ...]:
        return tuple(self.sizes[n] for n in spec.given + spec.to)

    def subscripts(self, spec: FactorSpec) -> str:
        return "".join(self.letters[n] for n in spec.given + spec.to)

    @property
    def free_positions(self) -> List[int]:
        return [i for i, spec in enumerate(self.factors) if spec.free]

    def initial_tables(self, rng: Optional[np.random.Generator]) -> List[np.ndarray]:
        """Uniform free kernels without `rng`, Dirichlet(1) rows with it"""
        tables = []
        for spec in self.factors:
            if not spec.free:
                tables.append(np.asarray(spec.table))
                continue
            shape = self.shape_of(spec)
            n_to = int(np.prod([self.sizes[n] for n in spec.to], dtype=int))
            n_rows = int(np.prod(shape, dtype=int)) // n_to
            if rng is None:
                rows = np.full((n_rows, n_to), 1.0 / n_to)
            else:
                rows = rng.dirichlet(np.ones(n_to), size=n_rows)
            tables.append(rows.reshape(shape))
        return tables

    def joint_array(self, tables: Sequence[np.ndarray]) -> np.ndarray:
        subs = ",".join(self.subscripts(spec) for spec in self.factors)
        return np.einsum(f"{subs}->abcde", *tables)

    def to_joint(self, mass: np.ndarray) -> JointDist:
        return JointDist.normalized(self.variables, np.clip(mass, 0.0, None))

    def _marginal(self, P: np.ndarray, keep: Tuple[int, ...]) -> np.ndarray:
        drop = tuple(i for i in range(P.ndim) if i not in keep)
        return P.sum(axis=drop, keepdims=True)

    def loss(self, P: np.ndarray, weight: float) -> float:
        value = sum(coef * entropy_bits(self._marginal(P, axes)) for coef, axes in self.terms)
        diff = P.sum(axis=1) - self.target.mass
        return float(value - weight * (diff ** 2).sum())

    def gradient(self, P: np.ndarray, weight: float) -> np.ndarray:
        """Gradient of `loss` with respect to the joint tensor, up to a constant"""
        G = np.zeros_like(P)
        for coef, axes in self.terms:
            G -= coef * np.log2(np.maximum(self._marginal(P, axes), LOG_FLOOR))
        diff = P.sum(axis=1) - self.target.mass
        G -= 2.0 * weight * np.expand_dims(diff, 1)
        return G

    def kernel_gradient(self, G: np.ndarray, tables: Sequence[np.ndarray], position: int) -> np.ndarray:
        others = [i for i in range(len(self.factors)) if i != position]
        subs = ",".join(["abcde"] + [self.subscripts(self.factors[i]) for i in others])
        out = self.subscripts(self.factors[position])
        return np.einsum(f"{subs}->{out}", G, *[tables[i] for i in others])

    def refactorize(self, E: np.ndarray) -> np.ndarray:
        """Replace every free kernel with the conditional of E and rebuild the product"""
        joint = self.to_joint(E)
        tables = []
        for spec in self.factors:
            if spec.free:
                tables.append(np.array(condition(marginalize(joint, spec.given + spec.to), spec.given).table))
            else:
                tables.append(np.asarray(spec.table))
        return self.joint_array(tables)


def _ascend(family: Family, tables: List[np.ndarray], cfg: OptimizerConfig) -> Tuple[np.ndarray, int]:
    """Alternating projected gradient ascent with Armijo backtracking over the free kernels"""
    evaluations = 0
    P = family.joint_array(tables)
    current = family.loss(P, cfg.penalty_weight)

    for sweep in range(cfg.max_iterations):
        start = current
        for position in family.free_positions:
            G = family.gradient(P, cfg.penalty_weight)
            kernel = tables[position]
            grad = family.kernel_gradient(G, tables, position)
            n_to = int(np.prod([family.sizes[n] for n in family.factors[position].to], dtype=int))
            rows, grad_rows = kernel.reshape(-1, n_to), grad.reshape(-1, n_to)

            step = cfg.step_size
            for _ in range(MAX_HALVINGS):
                candidate = project_rows(rows + step * grad_rows).reshape(kernel.shape)
                trial = list(tables)
                trial[position] = candidate
                P_trial = family.joint_array(trial)
                value = family.loss(P_trial, cfg.penalty_weight)
                evaluations += 1
                if value >= current + ARMIJO * float((grad * (candidate - kernel)).sum()):
                    tables, P, current = trial, P_trial, value
                    break
                step /= 2.0

        if current - start < SWEEP_IMPROVEMENT:
            logger.debug(f"Ascent settled after {sweep + 1} sweeps at {current:.9f}")
            break
    return P, evaluations


def _family_for(setting: SettingId, target: JointDist, cardinality: int) -> Family:
    return Family(setting, target, cardinality)


def repair_to_admissible(
    setting: SettingId,
    E: JointDist,
    target: JointDist,
    tol: float = DEFAULT_FEASIBILITY_TOL,
    max_sweeps: int = REPAIR_SWEEPS,
) -> JointDist:
    """
    Pull E back into the factorized family of `setting` with the target's marginal.

    Alternates between rebuilding E from the family's kernels (fixed ones
    taken from the target, free ones from E itself) and rescaling E so that
    its (U,X,Y,V)-marginal equals the target. Returns the first factorized
    E whose marginal is within `tol` in total variation.
    """
    setting = SettingId(setting)
    E = reorder(E, canonical_order(setting))
    family = _family_for(setting, target, E.alphabet(setting.aux).size)
    goal = family.target.mass
    mass = E.mass

    for sweep in range(max_sweeps):
        mass = family.refactorize(mass)
        marginal = mass.sum(axis=1)
        residual = 0.5 * float(np.abs(marginal - goal).sum())
        if residual <= tol:
            logger.debug(f"Repair converged after {sweep + 1} sweeps, residual {residual:.2e}")
            return family.to_joint(mass)
        ratio = np.divide(goal, marginal, out=np.zeros_like(goal), where=marginal > 0)
        mass = mass * np.expand_dims(ratio, 1)
        if mass.sum() <= 0:
            break

    raise RepairError(f"{setting.value}: repair did not converge within {max_sweeps} sweeps")


def pad_aux(E: JointDist, setting: SettingId, cardinality: int) -> JointDist:
    """Embed E into a larger auxiliary alphabet with zero-mass extra symbols"""
    setting = SettingId(setting)
    E = reorder(E, canonical_order(setting))
    current = E.alphabet(setting.aux).size
    if cardinality < current:
        raise DomainError(f"Cannot shrink auxiliary alphabet from {current} to {cardinality}")
    widths = [(0, 0)] * len(E.shape)
    widths[1] = (0, cardinality - current)
    variables = E.variables[:1] + (aux_alphabet(setting.aux, cardinality),) + E.variables[2:]
    return JointDist(variables, np.pad(E.mass, widths))


def _score(setting, E, target, tol, method, evaluations, cardinality, label) -> Optional[AuxSolution]:
    report = check_admissible(setting, E, target, tol)
    if not report.passed:
        logger.debug(f"{label} rejected: {report.violations}")
        return None
    return AuxSolution(
        extended=E,
        value=objective_value(setting, E),
        feasibility_residual=report.max_residual,
        method=method,
        evaluations=evaluations,
        aux_cardinality=cardinality,
        setting=setting,
        label=label,
    )


def _best(candidates: List[AuxSolution]) -> AuxSolution:
    return min(candidates, key=lambda s: (-s.value, s.feasibility_residual, tuple(s.extended.mass.ravel())))


def _run_restart(family: Family, cfg: OptimizerConfig, restart: int) -> Tuple[str, Optional[JointDist], int]:
    rng = None if restart == 0 else np.random.default_rng(cfg.seed + restart)
    P, evaluations = _ascend(family, family.initial_tables(rng), cfg)
    label = f"restart {restart}"
    try:
        E = repair_to_admissible(family.setting, family.to_joint(P), family.target, cfg.feasibility_tol)
    except RepairError as e:
        logger.warning(f"{label}: {e}")
        return label, None, evaluations
    return label, E, evaluations


def maximize(
    setting: SettingId,
    problem: CoordinationProblem,
    cfg: Optional[OptimizerConfig] = None,
    warm_start: Optional[AuxSolution] = None,
) -> AuxSolution:
    """
    Best admissible extension found for the setting's objective.

    Candidates come from the penalty ascent restarts, the explicit witnesses,
    the warm start, and a split-kernel pattern search seeded from all of
    them and from a coarse grid. Up to CARDINALITY_LADDER, the optimum at
    the next smaller cardinality is solved first and carried up, so the
    returned value never decreases with the cardinality there.

    Args:
        setting: one of the settings with an auxiliary variable
        problem: supplies the target joint; its own setting is not consulted
        cfg: search parameters, defaults from config
        warm_start: a previous solution of no larger cardinality, tried as a candidate

    Returns:
        AuxSolution with the highest value among all candidates
    """
    setting = SettingId(setting)
    if setting.aux is None:
        raise AuxiliaryFreeSettingError(f"{setting.value} has no auxiliary variable to optimize")
    cfg = cfg or OptimizerConfig()
    target = problem.target()
    cardinality = cfg.cardinality_for(target)
    family = _family_for(setting, target, cardinality)
    logger.info(f"Maximizing {setting.value} with |{setting.aux}|={cardinality}, {cfg.restarts} restarts")

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            runs = list(pool.map(lambda r: _run_restart(family, cfg, r), range(cfg.restarts)))
    else:
        runs = [_run_restart(family, cfg, r) for r in range(cfg.restarts)]

    pool_of: List[Tuple[str, JointDist]] = [(label, E) for label, E, _ in runs if E is not None]
    pool_of += witnesses(setting, target, cardinality, cfg.feasibility_tol)
    if warm_start is not None:
        try:
            pool_of.append(("warm start", pad_aux(warm_start.extended, setting, cardinality)))
        except DomainError as e:
            logger.warning(f"Ignoring warm start: {e}")
    if 1 < cardinality <= CARDINALITY_LADDER:
        try:
            smaller = maximize(setting, problem, replace(cfg, aux_cardinality=cardinality - 1))
            pool_of.append((f"|{setting.aux}|={cardinality - 1} optimum", pad_aux(smaller.extended, setting, cardinality)))
        except InfeasibleParameterizationError:
            logger.debug(f"No admissible extension with |{setting.aux}|={cardinality - 1}")

    found, searched = split_search(setting, target, cardinality, cfg, pool_of)
    pool_of += found
    evaluations = sum(n for _, _, n in runs) + searched + len(pool_of)

    scored = [_score(setting, E, target, cfg.feasibility_tol, MULTISTART, evaluations, cardinality, label) for label, E in pool_of]
    feasible = [s for s in scored if s is not None]
    if not feasible:
        raise InfeasibleParameterizationError(
            f"{setting.value}: no candidate reached feasibility tolerance {cfg.feasibility_tol}"
        )
    best = _best(feasible)
    logger.info(f"{setting.value} maximum {best.value:.6f} bits from {best.label}")
    return best


# Split-kernel parameterization shared by the oracle and the split search

# Conditioning variables of the auxiliary split kernel Q(aux | ...)
SPLIT_GIVEN: Dict[SettingId, Tuple[str, ...]] = {
    SettingId.CAUSAL_ENC_FB: (U, X),
    SettingId.SC_ENC_NOFB: (U, X),
    SettingId.SC_DEC_NOFB: (U, X, V),
    SettingId.CAUSAL_DEC_FB: (U, X),
}

# Base conditioning variables of the decoder kernel Q(v | ..., aux) fitted per split
DECODER_GIVEN: Dict[SettingId, Optional[Tuple[str, ...]]] = {
    SettingId.CAUSAL_ENC_FB: (U, Y),
    SettingId.SC_ENC_NOFB: (X, Y),
    SettingId.SC_DEC_NOFB: None,
    SettingId.CAUSAL_DEC_FB: (Y,),
}

LETTERS = {U: "a", X: "c", Y: "d", V: "e"}
PARTIAL_AXES = {U: 1, X: 3, Y: 4}


def simplex_grid(dimension: int, grid: int) -> np.ndarray:
    """All probability vectors of length `dimension` with entries in multiples of 1/grid"""
    points = []
    for bars in itertools.combinations(range(grid + dimension - 1), dimension - 1):
        edges = (-1,) + bars + (grid + dimension - 1,)
        points.append([edges[i + 1] - edges[i] - 1 for i in range(dimension)])
    return np.array(points, dtype=float) / grid


def _split_layout(setting: SettingId, target: JointDist) -> Tuple[np.ndarray, List[int], Dict[int, int]]:
    """
    Row weights of the split kernel, the rows to enumerate, and the rows solved from the others.

    Solved rows only occur for the causal-encoding set, where U independent
    of the auxiliary variable fixes one row per further source symbol.
    """
    given = SPLIT_GIVEN[setting]
    weights = marginalize(target, given).mass.ravel()
    active = [i for i in range(weights.size) if weights[i] > 0]
    solved: Dict[int, int] = {}
    if setting is SettingId.CAUSAL_ENC_FB:
        n_x = target.alphabet(X).size
        sources = sorted({i // n_x for i in active})
        for u in sources[1:]:
            rows = [i for i in active if i // n_x == u]
            solved[u] = max(rows, key=lambda i: weights[i])
    enumerated = [i for i in active if i not in solved.values()]
    return weights, enumerated, solved


class SplitSpace:
    """
    Admissible extensions of one target parameterized by the auxiliary split kernel.

    The split kernel has one row per tuple of `SPLIT_GIVEN`. Rows with target
    mass are enumerated or, for the causal-encoding set, solved from the
    others; rows without mass stay on the first symbol. The decoder kernel a
    split leaves free is fitted by least squares, falling back to
    nonnegative least squares when the fit is not unique. Every method works
    on a batch of splits, shaped (points, enumerated rows, cardinality).
    """

    def __init__(self, setting: SettingId, target: JointDist, cardinality: int, tol: float = DEFAULT_FEASIBILITY_TOL):
        self.setting = SettingId(setting)
        if self.setting.aux is None:
            raise AuxiliaryFreeSettingError(f"{self.setting.value} has no auxiliary variable to optimize")
        if cardinality < 1:
            raise DomainError(f"aux_cardinality must be at least 1, got {cardinality}")
        self.target = reorder(target, BASE)
        self.k = cardinality
        self.tol = tol
        self.weights, self.enumerated, self.solved = _split_layout(self.setting, self.target)
        self.given = SPLIT_GIVEN[self.setting]
        self.split_shape = tuple(self.target.alphabet(n).size for n in self.given) + (cardinality,)
        self.variables = (self.target.variables[0], aux_alphabet(self.setting.aux, cardinality)) + self.target.variables[1:]
        names = canonical_order(self.setting)
        self.terms = [(coef, tuple(names.index(n) for n in term)) for coef, term in entropy_terms(self.setting)]
        self.split_subs = "".join(LETTERS[n] for n in self.given) + "b"

        self.decoder_given = DECODER_GIVEN[self.setting]
        if self.decoder_given is not None:
            self.decoder_subs = "".join(LETTERS[n] for n in self.decoder_given) + "be"
            rest = tuple(n for n in (U, X, Y) if n not in self.decoder_given)
            self.partial_order = [0] + [PARTIAL_AXES[n] for n in self.decoder_given + rest] + [2]
            self.decoder_shape = tuple(self.target.alphabet(n).size for n in self.decoder_given)
            n_v = self.target.alphabet(V).size
            t_order = [BASE.index(n) for n in self.decoder_given + rest] + [3]
            self.B = np.transpose(self.target.mass, t_order).reshape(int(np.prod(self.decoder_shape, dtype=int)), -1, n_v)
            self.rhs = np.concatenate([self.B.reshape(self.B.shape[0], -1), np.ones((self.B.shape[0], cardinality))], axis=1)
            self.sum_rows = np.kron(np.eye(cardinality), np.ones((1, n_v)))

    @property
    def params(self) -> int:
        return len(self.enumerated) * (self.k - 1)

    def grid_count(self, grid: int) -> int:
        return math.comb(grid + self.k - 1, self.k - 1) ** len(self.enumerated)

    def check_size(self, grid: int) -> int:
        if self.params > ORACLE_MAX_PARAMS:
            raise OracleSizeError(f"{self.params} free split parameters exceed the oracle bound {ORACLE_MAX_PARAMS}")
        count = self.grid_count(grid)
        if count > ORACLE_MAX_POINTS:
            raise OracleSizeError(f"{count} grid points exceed the oracle bound {ORACLE_MAX_POINTS}")
        return count

    def rows_from(self, free: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        rows = np.zeros((free.shape[0], self.weights.size, self.k))
        rows[:, :, 0] = 1.0
        rows[:, self.enumerated] = free
        ok = self._complete(rows) if self.solved else np.ones(free.shape[0], dtype=bool)
        return rows, ok

    def _complete(self, rows: np.ndarray) -> np.ndarray:
        """Fill the solved rows in place so that every source symbol sees the same Q(aux)"""
        n_x = self.target.alphabet(X).size
        p_xu = self.weights.reshape(-1, n_x)
        p_x_given_u = p_xu / p_xu.sum(axis=1, keepdims=True).clip(min=LOG_FLOOR)
        by_source = rows.reshape(rows.shape[0], -1, n_x, self.k)
        reference = min(i // n_x for i in self.enumerated)
        q_aux = np.einsum("x,pxk->pk", p_x_given_u[reference], by_source[:, reference])

        ok = np.ones(rows.shape[0], dtype=bool)
        for u, row in self.solved.items():
            x_star = row % n_x
            others = [x for x in range(n_x) if x != x_star]
            rest = q_aux - np.einsum("x,pxk->pk", p_x_given_u[u, others], by_source[:, u, others])
            filled = rest / p_x_given_u[u, x_star]
            ok &= filled.min(axis=1) >= -1e-12
            filled = np.clip(filled, 0.0, None)
            total = filled.sum(axis=1, keepdims=True)
            rows[:, row] = np.divide(filled, total, out=np.full_like(filled, 1.0 / self.k), where=total > 0)
        return ok

    def assemble(self, rows: np.ndarray, ok: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Extended masses over (U, aux, X, Y, V) and which of them reproduce the target"""
        split = rows.reshape((rows.shape[0],) + self.split_shape)
        if self.decoder_given is None:
            return np.einsum(f"acde,p{self.split_subs}->pabcde", self.target.mass, split), ok
        partial = np.einsum(f"acd,p{self.split_subs}->pabcd", self.target.mass.sum(axis=3), split)
        decoder, fitted = self._fit_decoder(partial)
        return np.einsum(f"pabcd,p{self.decoder_subs}->pabcde", partial, decoder), ok & fitted

    def _fit_decoder(self, partial: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Solve A Q = B with unit row sums for every split and decoder context.

        A holds the partial mass of the context's remaining variables against
        the auxiliary symbol and B the target mass against V. Since A 1 = B 1,
        Q = A+ B + (I - A+ A) 1 1'/|V| meets both and is the least-norm
        solution; when A has deficient column rank and that solution has a
        negative entry, nonnegative least squares looks for another one.
        """
        n_points, k = partial.shape[0], self.k
        n_v = self.target.alphabet(V).size
        A = np.transpose(partial, self.partial_order).reshape(n_points, self.B.shape[0], -1, k)
        pseudo = np.linalg.pinv(A, rcond=1e-10)
        projector = pseudo @ A
        spread = (np.eye(k) - projector).sum(axis=-1, keepdims=True) / n_v
        solution = pseudo @ self.B + spread
        residual = np.maximum(
            np.abs(A @ solution - self.B).max(axis=(2, 3)),
            np.abs(solution.sum(axis=-1) - 1.0).max(axis=2),
        )
        consistent = residual <= self.tol
        negative = solution.min(axis=(2, 3)) < -self.tol

        deficient = np.trace(projector, axis1=2, axis2=3) < k - 0.5
        for p, g in zip(*np.nonzero(consistent & negative & deficient)):
            M = np.vstack([np.kron(A[p, g], np.eye(n_v)), self.sum_rows])
            candidate, _ = nnls(M, self.rhs[g])
            solution[p, g] = candidate.reshape(k, n_v)
            negative[p, g] = False
            consistent[p, g] = np.abs(M @ candidate - self.rhs[g]).max() <= self.tol

        decoder = np.clip(solution, 0.0, None).reshape((n_points,) + self.decoder_shape + (k, n_v))
        return decoder, (consistent & ~negative).all(axis=1)

    def values(self, mass: np.ndarray, ok: np.ndarray) -> np.ndarray:
        """Objective of every extended mass, minus infinity where it is not admissible"""
        mass = np.clip(mass, 0.0, None)
        total = mass.sum(axis=tuple(range(1, mass.ndim)), keepdims=True)
        mass = np.divide(mass, total, out=np.zeros_like(mass), where=total > 0)
        value = np.zeros(mass.shape[0])
        for coef, axes in self.terms:
            drop = tuple(1 + i for i in range(5) if i not in axes)
            marginal = mass.sum(axis=drop).reshape(mass.shape[0], -1)
            value += coef * entr(marginal).sum(axis=1) / LN2
        return np.where(ok & (total.ravel() > 0), value, -np.inf)

    def evaluate(self, free: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        rows, ok = self.rows_from(free)
        mass, ok = self.assemble(rows, ok)
        return self.values(mass, ok), mass

    def free_of(self, E: JointDist) -> np.ndarray:
        """The enumerated split rows of an extension of this target"""
        E = reorder(E, canonical_order(self.setting))
        split = condition(marginalize(E, self.given + (self.setting.aux,)), self.given).table
        return np.asarray(split).reshape(-1, self.k)[self.enumerated]

    def to_joint(self, mass: np.ndarray) -> JointDist:
        return JointDist.normalized(self.variables, np.clip(mass, 0.0, None))

    def grid_top(self, grid: int, keep: int) -> List[Tuple[int, float, np.ndarray, np.ndarray]]:
        """
        The `keep` best admissible points of the simplex grid.

        Points are visited in the order of itertools.product over the
        enumerated rows; ties keep the earlier point. Returns tuples of
        (point index, value, free rows, extended mass).
        """
        points = simplex_grid(self.k, grid)
        dims = (len(points),) * len(self.enumerated)
        count = self.grid_count(grid)
        best_index = np.zeros(0, dtype=np.int64)
        best_value = np.zeros(0)
        best_free = np.zeros((0, len(self.enumerated), self.k))
        best_mass = np.zeros((0,) + self.target.shape[:1] + (self.k,) + self.target.shape[1:])

        for start in range(0, count, ORACLE_CHUNK):
            index = np.arange(start, min(start + ORACLE_CHUNK, count), dtype=np.int64)
            if dims:
                digits = np.stack(np.unravel_index(index, dims), axis=1)
            else:
                digits = np.zeros((len(index), 0), dtype=np.intp)
            free = points[digits].reshape(len(index), len(self.enumerated), self.k)
            value, mass = self.evaluate(free)

            best_index = np.concatenate([best_index, index])
            best_value = np.concatenate([best_value, value])
            best_free = np.concatenate([best_free, free])
            best_mass = np.concatenate([best_mass, mass])
            order = np.lexsort((best_index, -best_value))
            order = order[np.isfinite(best_value[order])][:keep]
            best_index, best_value = best_index[order], best_value[order]
            best_free, best_mass = best_free[order], best_mass[order]

        return [(int(i), float(v), f, m) for i, v, f, m in zip(best_index, best_value, best_free, best_mass)]


def _stencil(dimension: int) -> np.ndarray:
    """Pattern-search moves: a full box of radius 2 or 1 when small enough, else the coordinate axes"""
    if dimension == 0:
        return np.zeros((0, 0))
    for radius in (2, 1):
        if (2 * radius + 1) ** dimension - 1 <= SPLIT_STENCIL_MAX:
            offsets = np.array(list(itertools.product(range(-radius, radius + 1), repeat=dimension)), dtype=float)
            return offsets[np.any(offsets != 0, axis=1)]
    eye = np.eye(dimension)
    return np.vstack([eye, -eye])


def _refine(
    space: SplitSpace, free: np.ndarray, value: float, mass: np.ndarray, max_moves: int
) -> Tuple[float, np.ndarray, int]:
    """Pattern search on the split rows with halving steps; the first symbol of each row absorbs every move"""
    n_rows = len(space.enumerated)
    offsets = _stencil(n_rows * (space.k - 1))
    evaluations = 0
    step = SPLIT_START_STEP
    while len(offsets) and step >= SPLIT_MIN_STEP:
        for _ in range(max_moves):
            delta = (offsets * step).reshape(-1, n_rows, space.k - 1)
            moved = np.repeat(free[None], len(offsets), axis=0)
            moved[:, :, 1:] += delta
            moved[:, :, 0] -= delta.sum(axis=2)
            moved = np.clip(moved[(moved >= -1e-15).all(axis=(1, 2))], 0.0, None)
            if not len(moved):
                break
            values, masses = space.evaluate(moved)
            evaluations += len(moved)
            best = int(np.argmax(values))
            if not values[best] > value + SWEEP_IMPROVEMENT:
                break
            free, value, mass = moved[best], float(values[best]), masses[best]
        step /= 2
    return value, mass, evaluations


def _seed_grid(space: SplitSpace) -> Optional[int]:
    """The finest power-of-two grid up to SPLIT_SEED_GRID whose point count stays within SPLIT_SEED_POINTS"""
    if space.params > ORACLE_MAX_PARAMS:
        return None
    grid, candidate = None, 2
    while candidate <= SPLIT_SEED_GRID and space.grid_count(candidate) <= SPLIT_SEED_POINTS:
        grid, candidate = candidate, candidate * 2
    return grid


def split_search(
    setting: SettingId,
    target: JointDist,
    cardinality: int,
    cfg: OptimizerConfig,
    starts: Sequence[Tuple[str, JointDist]] = (),
) -> Tuple[List[Tuple[str, JointDist]], int]:
    """
    Admissible extensions found by pattern search over the split kernel.

    Seeds are the best points of a coarse simplex grid and the split rows
    of every extension in `starts`. Every candidate is admissible up to the
    decoder fit, so no penalty or repair is involved. Instances with more
    than ORACLE_MAX_PARAMS split parameters are skipped.
    """
    space = SplitSpace(setting, target, cardinality, cfg.feasibility_tol)
    if space.params > ORACLE_MAX_PARAMS:
        logger.debug(f"Split search skipped: {space.params} parameters")
        return [], 0

    seeds: List[Tuple[np.ndarray, float, np.ndarray]] = []
    evaluations = 0
    grid = _seed_grid(space)
    if grid is not None:
        seeds += [(free, value, mass) for _, value, free, mass in space.grid_top(grid, max(cfg.restarts, SPLIT_SEEDS))]
        evaluations += space.grid_count(grid)
    for label, E in starts:
        free = space.free_of(E)
        values, masses = space.evaluate(free[None])
        evaluations += 1
        if np.isfinite(values[0]):
            seeds.append((free, float(values[0]), masses[0]))
        else:
            logger.debug(f"Split of {label} has no admissible decoder fit")
    logger.debug(f"Split search from {len(seeds)} seeds, seed grid {grid}")

    found = []
    for i, (free, value, mass) in enumerate(seeds):
        value, mass, n = _refine(space, free, value, mass, max(cfg.max_iterations, 1))
        evaluations += n
        found.append((f"split search {i}", space.to_joint(mass)))
    return found, evaluations


def brute_force_oracle(
    setting: SettingId,
    problem: CoordinationProblem,
    aux_cardinality: int,
    grid: int,
    tol: float = DEFAULT_FEASIBILITY_TOL,
) -> AuxSolution:
    """
    Exhaustive grid search over the auxiliary split kernel of a small instance.

    Grid points are evaluated in batches; the best ORACLE_VERIFY of them are
    rebuilt as distributions and checked for admissibility. The result is a
    certified lower bound on the maximum.
    """
    setting = SettingId(setting)
    if setting.aux is None:
        raise AuxiliaryFreeSettingError(f"{setting.value} has no auxiliary variable to optimize")
    if grid < 2:
        raise DomainError(f"Oracle grid must be at least 2, got {grid}")

    target = reorder(problem.target(), BASE)
    space = SplitSpace(setting, target, aux_cardinality, tol)
    count = space.check_size(grid)
    logger.info(f"Oracle for {setting.value}: {space.params} parameters, {count} grid points at spacing 1/{grid}")

    scored = [
        _score(setting, space.to_joint(mass), target, tol, ORACLE, count, aux_cardinality, f"grid point {index + 1}")
        for index, _, _, mass in space.grid_top(grid, ORACLE_VERIFY)
    ]
    feasible = [s for s in scored if s is not None]
    if not feasible:
        raise InfeasibleParameterizationError(f"{setting.value}: no grid point reproduces the target")
    best = _best(feasible)
    logger.info(f"Oracle maximum {best.value:.6f} bits")
    return best


def oracle_spacing(grid: int) -> float:
    return 1.0 / grid if grid > 0 else math.inf
