"""
Finite-alphabet probability tensors and the information measures built on them.

All logarithms are base 2 and 0 log 0 is taken to be 0. Variables are referred
to by the name of their alphabet; a JointDist keeps its variables in a fixed
order and its mass tensor is indexed by symbol position in that order.

Function             Non-negativity  Symmetry
==================== =============== ========
entropy              Yes
mutual_information   Yes             Yes
total_variation      Yes             Yes (metric)
"""

import logging
import math
import string
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import entr

from coordfb.config import PROB_TOL
from coordfb.exceptions import (
    DomainError,
    LengthMismatchError,
    ShapeMismatchError,
    SymbolError,
    VariableMismatchError,
)

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
_LETTERS = string.ascii_letters

Names = Union[str, "Alphabet", Iterable[Union[str, "Alphabet"]]]


@dataclass(frozen=True)
class Alphabet:
    """A named, ordered, finite set of symbols"""

    name: str
    symbols: Tuple[Hashable, ...]

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if not symbols:
            raise SymbolError(f"Alphabet {self.name} has no symbols")
        if len(set(symbols)) != len(symbols):
            raise SymbolError(f"Alphabet {self.name} repeats a symbol: {symbols}")

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, symbol: Hashable) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise SymbolError(f"Symbol {symbol!r} is not in alphabet {self.name}") from None


def _as_names(names: Names) -> Tuple[str, ...]:
    if isinstance(names, (str, Alphabet)):
        names = (names,)
    return tuple(n.name if isinstance(n, Alphabet) else n for n in names)


@dataclass(frozen=True, eq=False)
class JointDist:
    """Dense probability tensor over an ordered list of alphabets"""

    variables: Tuple[Alphabet, ...]
    mass: np.ndarray

    def __post_init__(self):
        variables = tuple(self.variables)
        names = [a.name for a in variables]
        if len(set(names)) != len(names):
            raise VariableMismatchError(f"Duplicate variables in {names}")

        mass = np.array(self.mass, dtype=float)
        shape = tuple(a.size for a in variables)
        if mass.shape != shape:
            raise ShapeMismatchError(f"Mass shape {mass.shape} does not match alphabets {shape}")
        if mass.size and mass.min() < -PROB_TOL:
            raise DomainError(f"Negative probability mass {mass.min()}")
        mass = np.clip(mass, 0.0, None)
        total = mass.sum()
        if abs(total - 1.0) > PROB_TOL:
            raise DomainError(f"Probability mass sums to {total!r}, not 1")

        mass.setflags(write=False)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def normalized(cls, variables: Sequence[Alphabet], weights: np.ndarray) -> "JointDist":
        """Build a distribution from nonnegative weights by dividing by their sum"""
        weights = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        total = weights.sum()
        if not total > 0:
            raise DomainError("Cannot normalize weights with zero total mass")
        return cls(tuple(variables), weights / total)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(a.name for a in self.variables)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.mass.shape

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise VariableMismatchError(f"Unknown variable {name}, have {self.names}") from None

    def alphabet(self, name: str) -> Alphabet:
        return self.variables[self.axis(name)]

    def same_support_as(self, other: "JointDist") -> bool:
        return self.variables == other.variables

    def __repr__(self) -> str:
        return f"JointDist({', '.join(self.names)}; shape={self.shape})"


@dataclass(frozen=True, eq=False)
class Kernel:
    """
    Conditional probability table from the `given` variables to the `to` variables.

    `table` has the axes of `given` followed by the axes of `to`. `degenerate`
    flags conditioning tuples whose row was filled uniformly because the tuple
    carried no probability mass.
    """

    given: Tuple[Alphabet, ...]
    to: Tuple[Alphabet, ...]
    table: np.ndarray
    degenerate: Optional[np.ndarray] = None

    def __post_init__(self):
        given, to = tuple(self.given), tuple(self.to)
        names = [a.name for a in given + to]
        if len(set(names)) != len(names):
            raise VariableMismatchError(f"Kernel variables overlap: {names}")
        if not to:
            raise VariableMismatchError("Kernel needs at least one output variable")

        given_shape = tuple(a.size for a in given)
        shape = given_shape + tuple(a.size for a in to)
        table = np.array(self.table, dtype=float)
        if table.shape != shape:
            raise ShapeMismatchError(f"Kernel table shape {table.shape} does not match {shape}")
        if table.min() < -PROB_TOL:
            raise DomainError(f"Negative kernel entry {table.min()}")
        table = np.clip(table, 0.0, None)
        row_sums = table.reshape(int(np.prod(given_shape, dtype=int)), -1).sum(axis=1)
        worst = np.abs(row_sums - 1.0).max()
        if worst > PROB_TOL:
            raise DomainError(f"Kernel rows must sum to 1, worst deviation {worst!r}")

        degenerate = self.degenerate
        if degenerate is None:
            degenerate = np.zeros(given_shape, dtype=bool)
        degenerate = np.array(degenerate, dtype=bool).reshape(given_shape)

        table.setflags(write=False)
        degenerate.setflags(write=False)
        object.__setattr__(self, "given", given)
        object.__setattr__(self, "to", to)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "degenerate", degenerate)

    @property
    def given_names(self) -> Tuple[str, ...]:
        return tuple(a.name for a in self.given)

    @property
    def to_names(self) -> Tuple[str, ...]:
        return tuple(a.name for a in self.to)

    @property
    def rows(self) -> np.ndarray:
        """The table as a (conditioning tuples) x (output tuples) matrix"""
        n_cols = int(np.prod([a.size for a in self.to], dtype=int))
        return self.table.reshape(-1, n_cols)

    def row(self, *given_symbols: Hashable) -> np.ndarray:
        if len(given_symbols) != len(self.given):
            raise VariableMismatchError(f"Expected {len(self.given)} conditioning symbols")
        index = tuple(a.index(s) for a, s in zip(self.given, given_symbols))
        return self.table[index]

    def __repr__(self) -> str:
        return f"Kernel({','.join(self.to_names)} | {','.join(self.given_names)})"


@dataclass(frozen=True, eq=False)
class ObjectiveFn:
    """Real-valued function on the product of `variables`"""

    variables: Tuple[Alphabet, ...]
    table: np.ndarray

    def __post_init__(self):
        variables = tuple(self.variables)
        table = np.array(self.table, dtype=float)
        if table.shape != tuple(a.size for a in variables):
            raise ShapeMismatchError("Objective table does not cover the full product alphabet")
        table.setflags(write=False)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "table", table)

    @classmethod
    def from_function(cls, variables: Sequence[Alphabet], fn: Callable[..., float]) -> "ObjectiveFn":
        """Tabulate fn(**{name: symbol}) over every symbol tuple"""
        variables = tuple(variables)
        table = np.empty(tuple(a.size for a in variables))
        for index in np.ndindex(*table.shape):
            symbols = {a.name: a.symbols[i] for a, i in zip(variables, index)}
            table[index] = fn(**symbols)
        return cls(variables, table)


def channel_cost(variables: Sequence[Alphabet], cost: Mapping[Hashable, float], input_name: str = "X") -> ObjectiveFn:
    """Phi(u, x, y, v) = c(x)"""
    return ObjectiveFn.from_function(variables, lambda **s: cost[s[input_name]])


def hamming_distortion(variables: Sequence[Alphabet], source_name: str = "U", output_name: str = "V") -> ObjectiveFn:
    """Phi(u, x, y, v) = 1 when the decoder output differs from the source symbol"""
    return ObjectiveFn.from_function(variables, lambda **s: float(s[source_name] != s[output_name]))


def joint_from_factors(factors: Sequence[Kernel]) -> JointDist:
    """
    Multiply a chain of kernels into one joint distribution.

    Every factor may only condition on variables introduced by earlier factors;
    the first factor therefore has no conditioning variables.
    """
    if not factors:
        raise VariableMismatchError("At least one factor is required")
    first = factors[0]
    if first.given:
        raise VariableMismatchError(
            f"First factor conditions on {first.given_names}, which no earlier factor introduces"
        )

    variables = list(first.to)
    mass = np.asarray(first.table)
    for position, factor in enumerate(factors[1:], start=1):
        known = {a.name: a for a in variables}
        for alphabet in factor.given:
            if alphabet.name not in known:
                raise VariableMismatchError(
                    f"Factor {position} conditions on {alphabet.name}, which no earlier factor introduces"
                )
            if known[alphabet.name] != alphabet:
                raise ShapeMismatchError(f"Factor {position} uses a different alphabet for {alphabet.name}")
        for alphabet in factor.to:
            if alphabet.name in known:
                raise VariableMismatchError(f"Factor {position} introduces {alphabet.name} a second time")

        letters = {a.name: _LETTERS[i] for i, a in enumerate(variables + list(factor.to))}
        current = "".join(letters[a.name] for a in variables)
        local = "".join(letters[a.name] for a in factor.given + factor.to)
        out = current + "".join(letters[a.name] for a in factor.to)
        mass = np.einsum(f"{current},{local}->{out}", mass, factor.table)
        variables.extend(factor.to)

    return JointDist.normalized(variables, mass)


def _marginal_array(J: JointDist, names: Tuple[str, ...]) -> np.ndarray:
    """Marginal mass over `names`, axes left in J's order"""
    axes = {J.axis(n) for n in names}
    drop = tuple(i for i in range(len(J.variables)) if i not in axes)
    return J.mass.sum(axis=drop) if drop else J.mass


def marginalize(J: JointDist, keep: Names) -> JointDist:
    """Sum out every variable not in `keep`; the result follows the order of `keep`"""
    keep = _as_names(keep)
    if len(set(keep)) != len(keep):
        raise VariableMismatchError(f"Repeated variable in {keep}")
    axes = [J.axis(n) for n in keep]
    mass = _marginal_array(J, keep)
    order = sorted(axes)
    mass = np.transpose(mass, [order.index(a) for a in axes])
    return JointDist(tuple(J.variables[a] for a in axes), mass)


def reorder(J: JointDist, names: Names) -> JointDist:
    """Permute the variables of J"""
    names = _as_names(names)
    if set(names) != set(J.names) or len(names) != len(J.names):
        raise VariableMismatchError(f"{names} is not a permutation of {J.names}")
    return marginalize(J, names)


def condition(J: JointDist, given: Names) -> Kernel:
    """
    Conditional of the remaining variables of J given `given`.

    Rows whose conditioning tuple has zero mass are filled with the uniform
    vector and flagged in `Kernel.degenerate`.
    """
    given = _as_names(given)
    for name in given:
        J.axis(name)
    rest = tuple(n for n in J.names if n not in given)
    if not rest:
        raise VariableMismatchError("Conditioning on every variable leaves nothing to condition")

    joint = marginalize(J, given + rest)
    given_alphabets = joint.variables[: len(given)]
    rest_alphabets = joint.variables[len(given):]
    n_rows = int(np.prod([a.size for a in given_alphabets], dtype=int))
    rows = joint.mass.reshape(n_rows, -1)
    marginal = rows.sum(axis=1)
    empty = marginal <= 0.0
    if empty.any():
        logger.debug(f"{int(empty.sum())} zero-mass conditioning rows filled uniformly")

    safe = np.where(empty, 1.0, marginal)
    table = np.where(empty[:, None], 1.0 / rows.shape[1], rows / safe[:, None])
    return Kernel(
        given_alphabets,
        rest_alphabets,
        table.reshape(joint.shape),
        degenerate=empty.reshape(tuple(a.size for a in given_alphabets)),
    )


def entropy_bits(p: np.ndarray) -> float:
    """Shannon entropy in bits of a probability array of any shape"""
    return float(entr(p).sum() / LN2)


def _joint_entropy(J: JointDist, names: Tuple[str, ...]) -> float:
    if not names:
        return 0.0
    return entropy_bits(_marginal_array(J, names))


def _check_disjoint(*groups: Tuple[str, ...]) -> None:
    seen = set()
    for group in groups:
        if len(set(group)) != len(group) or seen & set(group):
            raise VariableMismatchError(f"Variable groups must be disjoint: {groups}")
        seen |= set(group)


def entropy(J: JointDist, of: Names, given: Names = ()) -> float:
    """H(of | given) in bits"""
    of, given = _as_names(of), _as_names(given)
    _check_disjoint(of, given)
    for name in of + given:
        J.axis(name)
    if not of:
        return 0.0
    return _joint_entropy(J, of + given) - _joint_entropy(J, given)


def mutual_information(J: JointDist, a: Names, b: Names, given: Names = ()) -> float:
    """I(a; b | given) in bits"""
    a, b, given = _as_names(a), _as_names(b), _as_names(given)
    _check_disjoint(a, b, given)
    for name in a + b + given:
        J.axis(name)
    if not a or not b:
        return 0.0
    return (
        _joint_entropy(J, a + given)
        + _joint_entropy(J, b + given)
        - _joint_entropy(J, a + b + given)
        - _joint_entropy(J, given)
    )


def binary_entropy(p: float) -> float:
    """H_b(p) = -p log2 p - (1-p) log2 (1-p)"""
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"Binary entropy needs p in [0, 1], got {p}")
    return float((entr(p) + entr(1.0 - p)) / LN2)


def total_variation(P: JointDist, Q: JointDist) -> float:
    """Half the L1 distance between two distributions on the same variables"""
    if not P.same_support_as(Q):
        raise ShapeMismatchError(f"Cannot compare {P} with {Q}")
    return float(0.5 * np.abs(P.mass - Q.mass).sum())


def empirical_from_indices(variables: Sequence[Alphabet], indices: Sequence[np.ndarray]) -> JointDist:
    """Empirical distribution of sequences already encoded as symbol positions"""
    variables = tuple(variables)
    if len(indices) != len(variables):
        raise LengthMismatchError(f"Got {len(indices)} sequences for {len(variables)} variables")
    arrays = [np.asarray(i, dtype=np.intp).ravel() for i in indices]
    lengths = {len(a) for a in arrays}
    if len(lengths) != 1:
        raise LengthMismatchError(f"Sequences have different lengths {sorted(lengths)}")
    n = lengths.pop()
    if n < 1:
        raise LengthMismatchError("Sequences must be non-empty")
    for alphabet, array in zip(variables, arrays):
        if array.min() < 0 or array.max() >= alphabet.size:
            raise SymbolError(f"Index outside alphabet {alphabet.name}")

    shape = tuple(a.size for a in variables)
    flat = np.ravel_multi_index(arrays, shape)
    counts = np.bincount(flat, minlength=int(np.prod(shape, dtype=int)))
    return JointDist(variables, (counts / n).reshape(shape))


def empirical_distribution(sequences: Sequence[Sequence[Hashable]], variables: Sequence[Alphabet]) -> JointDist:
    """N(symbol tuple | sequences) / n, one sequence per variable"""
    if len(sequences) != len(variables):
        raise LengthMismatchError(f"Got {len(sequences)} sequences for {len(variables)} variables")
    lengths = {len(s) for s in sequences}
    if len(lengths) != 1:
        raise LengthMismatchError(f"Sequences have different lengths {sorted(lengths)}")

    indices = []
    for alphabet, sequence in zip(variables, sequences):
        lookup = {s: i for i, s in enumerate(alphabet.symbols)}
        try:
            indices.append(np.array([lookup[s] for s in sequence], dtype=np.intp))
        except KeyError as e:
            raise SymbolError(f"Symbol {e.args[0]!r} is not in alphabet {alphabet.name}") from None
    return empirical_from_indices(variables, indices)


def is_typical(sequences: Sequence[Sequence[Hashable]], target: JointDist, tol: float) -> bool:
    """Strong typicality: the empirical joint lies within `tol` of `target` in total variation"""
    if not tol > 0:
        raise DomainError(f"Typicality tolerance must be positive, got {tol}")
    empirical = empirical_distribution(sequences, target.variables)
    return total_variation(empirical, target) < tol


def expected_objective(J: JointDist, phi: ObjectiveFn) -> float:
    """E_J[Phi]"""
    if phi.variables != J.variables:
        raise ShapeMismatchError("Objective function is defined on different variables")
    return float((J.mass * phi.table).sum())


def sample(J: JointDist, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, ...]:
    """Draw n i.i.d. symbol tuples from J, returned as one index array per variable"""
    flat = rng.choice(J.mass.size, size=n, p=J.mass.ravel())
    return tuple(np.unravel_index(flat, J.shape))


def draw_from_rows(rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index from each probability row (last axis) by inverse CDF"""
    rows = np.asarray(rows, dtype=float)
    cdf = np.cumsum(rows, axis=-1)
    u = rng.random(rows.shape[:-1])
    draws = (u[..., None] >= cdf).sum(axis=-1)
    return np.minimum(draws, rows.shape[-1] - 1)
