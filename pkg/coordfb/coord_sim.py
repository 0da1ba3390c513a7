"""
Monte-Carlo block-Markov coordination scheme with channel feedback.

A session runs B blocks of n symbols. In every block the encoder picks a
codeword index describing the previous block from the source and the fed-back
channel outputs, and the decoder recovers that index from the current channel
outputs and emits the previous block's reconstruction. Codewords are indexed
from 1 and generated lazily in seeded chunks, so codebooks of any size cost
only what is searched.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from coordfb.config import (
    CODEBOOK_CHUNK,
    DEFAULT_BLOCK_LENGTH,
    DEFAULT_BLOCKS,
    DEFAULT_COORD_TOL,
    DEFAULT_DELTA,
    DEFAULT_SEED,
    DEFAULT_TRIALS,
    SEARCH_LIMIT,
    TYPICALITY_SIGMAS,
)
from coordfb.exceptions import DomainError, RateWindowEmptyError, SymbolError, ZeroTrialsError
from coordfb.prob_core import JointDist, Kernel, condition, draw_from_rows, empirical_from_indices, marginalize, reorder
from coordfb.settings import BASE, CoordinationProblem, U, V, X, Y, embed_w_equals_x, rate_window

logger = logging.getLogger(__name__)

W = "W"
MAX_RATE_EXPONENT = 1024

# SeedSequence tags keeping the independent random streams apart
_W_STREAM, _V_STREAM, _SESSION_STREAM = 0, 1, 2


class Scheme(str, Enum):
    GENERIC_W = "GENERIC_W"
    W_EQUALS_X = "W_EQUALS_X"


@dataclass(frozen=True)
class SimConfig:
    """Session parameters; `typ_tol` of None lets every typicality test derive its tolerance from n"""

    n: int = DEFAULT_BLOCK_LENGTH
    B: int = DEFAULT_BLOCKS
    delta: float = DEFAULT_DELTA
    rate_override: Optional[float] = None
    typ_tol: Optional[float] = None
    coord_tol: float = DEFAULT_COORD_TOL
    seed: int = DEFAULT_SEED
    trials: int = DEFAULT_TRIALS
    scheme: Scheme = Scheme.GENERIC_W
    fixed_codebook: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.n < 1:
            raise DomainError(f"Block length n must be at least 1, got {self.n}")
        if self.B < 2:
            raise DomainError(f"Block count B must be at least 2, got {self.B}")
        if not self.delta > 0:
            raise DomainError(f"Rate margin delta must be positive, got {self.delta}")
        if not self.coord_tol > 0:
            raise DomainError(f"Coordination tolerance must be positive, got {self.coord_tol}")
        if self.typ_tol is not None and not self.typ_tol > 0:
            raise DomainError(f"Typicality tolerance must be positive, got {self.typ_tol}")
        if self.trials < 0:
            raise DomainError(f"Trial count must be non-negative, got {self.trials}")


def message_count(n: int, rate: float) -> int:
    """|M| = ceil(2^(nR)), with nR within 1e-9 of an integer taken as that integer"""
    exponent = n * rate
    if abs(exponent - round(exponent)) < 1e-9:
        exponent = round(exponent)
    if exponent >= MAX_RATE_EXPONENT:
        raise DomainError(f"nR = {exponent} is too large for an indexable codebook")
    return max(1, math.ceil(2.0 ** exponent))


def searchable_rate(n: int) -> float:
    """The largest rate whose codebook fits within SEARCH_LIMIT indices"""
    return math.log2(SEARCH_LIMIT) / n


def typicality_tolerance(target: JointDist, n: int, sigmas: float = TYPICALITY_SIGMAS) -> float:
    """
    TV tolerance met by n i.i.d. draws from `target` with high probability.

    Every cell frequency gets `sigmas` standard deviations, halved as total
    variation is; the floor of 1/n keeps degenerate targets testable.
    """
    p = target.mass.ravel()
    return max(float(sigmas / 2 * np.sqrt(p * (1 - p) / n).sum()), 1.0 / n)


class Codebooks:
    """
    W codewords W(m) and superposed V codewords V(m, m_hat), drawn on demand.

    Codeword m of chunk k is a function of (generation_seed, k) only, so
    results do not depend on which indices were looked at first.
    """

    def __init__(self, extended: JointDist, n: int, rate: float, generation_seed: int, chunk: int = CODEBOOK_CHUNK):
        self.extended = reorder(extended, (U, W, X, Y, V))
        self.n = n
        self.rate = rate
        self.generation_seed = generation_seed
        self.chunk = chunk
        self.message_count = message_count(n, rate)
        self.search_limit = min(self.message_count, SEARCH_LIMIT)

        self.q_w = marginalize(self.extended, W).mass
        self.q_v_w = np.array(condition(marginalize(self.extended, (W, V)), W).table)
        self.q_x_uw = np.array(condition(marginalize(self.extended, (U, W, X)), (U, W)).table)
        self.encoder_target = marginalize(self.extended, (U, Y, W, V))
        self.decoder_target = marginalize(self.extended, (Y, W))
        self.previous_target = marginalize(self.extended, (Y, W, V))

        self._w_chunks: Dict[int, np.ndarray] = {}
        self._v_chunks: Dict[Tuple[int, int], np.ndarray] = {}

    def _rng(self, *tags: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.generation_seed, *tags]))

    def _w_chunk(self, k: int) -> np.ndarray:
        if k not in self._w_chunks:
            rng = self._rng(_W_STREAM, k)
            self._w_chunks[k] = rng.choice(self.q_w.size, size=(self.chunk, self.n), p=self.q_w)
        return self._w_chunks[k]

    def _v_chunk(self, m: int, k: int) -> np.ndarray:
        if (m, k) not in self._v_chunks:
            rng = self._rng(_V_STREAM, m, k)
            rows = np.broadcast_to(self.q_v_w[self.w_word(m)], (self.chunk, self.n, self.q_v_w.shape[1]))
            self._v_chunks[(m, k)] = draw_from_rows(rows, rng)
        return self._v_chunks[(m, k)]

    def _check_index(self, m: int):
        if not 1 <= m <= self.message_count:
            raise SymbolError(f"Message index {m} outside 1..{self.message_count}")

    def w_word(self, m: int) -> np.ndarray:
        self._check_index(m)
        k, offset = divmod(m - 1, self.chunk)
        return self._w_chunk(k)[offset]

    def v_word(self, m: int, m_hat: int) -> np.ndarray:
        self._check_index(m)
        self._check_index(m_hat)
        k, offset = divmod(m_hat - 1, self.chunk)
        return self._v_chunk(m, k)[offset]

    def w_words(self, count: int) -> np.ndarray:
        """W(1) .. W(count) stacked as rows"""
        chunks = [self._w_chunk(k) for k in range(math.ceil(count / self.chunk))]
        return np.concatenate(chunks)[:count]

    def v_words(self, m: int, count: int) -> np.ndarray:
        """V(m, 1) .. V(m, count) stacked as rows"""
        chunks = [self._v_chunk(m, k) for k in range(math.ceil(count / self.chunk))]
        return np.concatenate(chunks)[:count]


def build_codebooks(
    E: JointDist, cfg: SimConfig, generation_seed: Optional[int] = None, target: Optional[JointDist] = None
) -> Codebooks:
    """
    Codebooks at the midpoint of the rate window, or at cfg.rate_override.

    The midpoint is capped at `searchable_rate(n)` so that the encoder and
    decoder searches cover the whole codebook.

    Raises RateWindowEmptyError when no rate satisfies both the covering and
    the packing condition, which happens exactly when the objective of E is
    at most 2 delta.
    """
    window = rate_window(E, cfg.delta, target)
    if window.width <= 0:
        raise RateWindowEmptyError(
            f"Rate window [{window.r_min:.6f}, {window.r_max:.6f}] is empty for delta={cfg.delta}"
        )
    if cfg.rate_override is None:
        rate = min(window.midpoint, searchable_rate(cfg.n))
        if rate < window.r_min:
            logger.warning(
                f"Only {SEARCH_LIMIT} codewords are searchable at n={cfg.n}: "
                f"rate {rate:.6f} lies below the covering bound {window.r_min:.6f}"
            )
    else:
        rate = cfg.rate_override
        if not window.r_min <= rate <= window.r_max:
            logger.warning(f"Rate {rate:.6f} lies outside the window [{window.r_min:.6f}, {window.r_max:.6f}]")
    seed = cfg.seed if generation_seed is None else generation_seed
    books = Codebooks(E, cfg.n, rate, seed)
    logger.debug(f"Codebooks at R={rate:.6f}: |M|={books.message_count}, searching {books.search_limit}")
    return books


def _typical_rows(columns: Sequence[np.ndarray], target: JointDist, typ_tol: Optional[float]) -> np.ndarray:
    """
    Typicality of many candidate tuples at once.

    `columns` holds one index array per target variable, each of shape (n,)
    or (candidates, n). Returns one boolean per candidate. A `typ_tol` of
    None uses `typicality_tolerance` of the target at this n.
    """
    arrays = np.broadcast_arrays(*[np.atleast_2d(c) for c in columns])
    candidates, n = arrays[0].shape
    cells = target.mass.size
    codes = np.ravel_multi_index(arrays, target.shape)
    offsets = np.arange(candidates)[:, None] * cells
    counts = np.bincount((codes + offsets).ravel(), minlength=candidates * cells).reshape(candidates, cells)
    tv = 0.5 * np.abs(counts / n - target.mass.ravel()).sum(axis=1)
    return tv < (typicality_tolerance(target, n) if typ_tol is None else typ_tol)


def encoder_step(
    books: Codebooks, m_prev: int, u_prev: np.ndarray, y_prev: np.ndarray, typ_tol: Optional[float] = None
) -> Tuple[int, bool]:
    """Smallest m with (u_prev, y_prev, W(m_prev), V(m_prev, m)) typical; (1, False) when none is"""
    candidates = books.v_words(m_prev, books.search_limit)
    typical = _typical_rows((u_prev, y_prev, books.w_word(m_prev), candidates), books.encoder_target, typ_tol)
    hits = np.flatnonzero(typical)
    if hits.size == 0:
        return 1, False
    return int(hits[0]) + 1, True


class DecodeResult(NamedTuple):
    m_hat: int
    v_prev: np.ndarray
    found: bool
    ambiguous: bool


def decoder_step(
    books: Codebooks, m_prev: int, y_prev: np.ndarray, y_curr: np.ndarray, typ_tol: Optional[float] = None
) -> DecodeResult:
    """
    Smallest m_hat consistent with both the current and the previous block.

    (y_curr, W(m_hat)) must be typical and so must (y_prev, W(m_prev),
    V(m_prev, m_hat)). The previous block's reconstruction is V(m_prev, m_hat).
    """
    count = books.search_limit
    current = _typical_rows((y_curr, books.w_words(count)), books.decoder_target, typ_tol)
    previous = _typical_rows(
        (y_prev, books.w_word(m_prev), books.v_words(m_prev, count)), books.previous_target, typ_tol
    )
    hits = np.flatnonzero(current & previous)
    m_hat = int(hits[0]) + 1 if hits.size else 1
    return DecodeResult(m_hat, books.v_word(m_prev, m_hat), bool(hits.size), bool(hits.size > 1))


def simulate_channel(x_block: np.ndarray, channel: Kernel, rng: np.random.Generator) -> np.ndarray:
    """Pass every input symbol independently through the channel"""
    x_block = np.asarray(x_block, dtype=np.intp)
    n_x = channel.rows.shape[0]
    if x_block.size and (x_block.min() < 0 or x_block.max() >= n_x):
        raise SymbolError(f"Channel input outside 0..{n_x - 1}")
    return draw_from_rows(channel.rows[x_block], rng)


@dataclass
class SessionTrace:
    u_blocks: np.ndarray
    x_blocks: np.ndarray
    y_blocks: np.ndarray
    v_blocks: np.ndarray
    chosen_indices: np.ndarray
    decoded_indices: np.ndarray
    encoder_failures: np.ndarray
    decoder_failures: np.ndarray
    ambiguities: np.ndarray

    @property
    def blocks(self) -> int:
        return self.u_blocks.shape[0]


@dataclass
class SimReport:
    empirical_all: JointDist
    empirical_core: JointDist
    tv_all: float
    tv_core: float
    p_error_estimate: float
    confidence_interval: Tuple[float, float]
    failure_counts: Dict[str, int]
    trials: int = 1
    rate: float = 0.0
    message_count: int = 1
    tv_all_per_trial: List[float] = field(default_factory=list)
    tv_core_per_trial: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "rate": self.rate,
            "message_count": self.message_count,
            "tv_all": self.tv_all,
            "tv_core": self.tv_core,
            "p_error_estimate": self.p_error_estimate,
            "confidence_interval": list(self.confidence_interval),
            "failure_counts": dict(self.failure_counts),
            "tv_all_per_trial": list(self.tv_all_per_trial),
            "tv_core_per_trial": list(self.tv_core_per_trial),
        }


def _prepare(E: JointDist, cfg: SimConfig) -> JointDist:
    if cfg.scheme is Scheme.W_EQUALS_X:
        return embed_w_equals_x(marginalize(E, BASE))
    return E


def _error_interval(errors: int, trials: int) -> Tuple[float, float]:
    ci = binomtest(errors, trials).proportion_ci(confidence_level=0.95)
    return float(ci.low), float(ci.high)


def run_session(
    problem: CoordinationProblem, E: JointDist, cfg: SimConfig, codebook_seed: Optional[int] = None
) -> Tuple[SessionTrace, SimReport]:
    """
    One block-Markov session of cfg.B blocks.

    Encoder and decoder share m_1 = 1. The encoder of block b reads only the
    source and channel outputs of block b-1 to choose m_b, then sends X
    letterwise from Q(x|u,w) against W(m_b), or X = W(m_b) under W_EQUALS_X.
    The last block is never decoded; its reconstruction is V(m_B, 1).
    """
    target = problem.target()
    E = _prepare(E, cfg)
    books = build_codebooks(E, cfg, cfg.seed if codebook_seed is None else codebook_seed, target)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _SESSION_STREAM]))

    n, B = cfg.n, cfg.B
    p_u = marginalize(target, U).mass
    u = rng.choice(p_u.size, size=(B, n), p=p_u)
    x = np.zeros((B, n), dtype=np.intp)
    y = np.zeros((B, n), dtype=np.intp)
    v = np.zeros((B, n), dtype=np.intp)
    chosen = np.ones(B, dtype=np.intp)
    decoded = np.ones(B, dtype=np.intp)
    enc_fail = np.zeros(B, dtype=bool)
    dec_fail = np.zeros(B, dtype=bool)
    ambiguous = np.zeros(B, dtype=bool)

    for b in range(B):
        if b > 0:
            chosen[b], found = encoder_step(books, int(chosen[b - 1]), u[b - 1], y[b - 1], cfg.typ_tol)
            enc_fail[b] = not found

        w_word = books.w_word(int(chosen[b]))
        if cfg.scheme is Scheme.W_EQUALS_X:
            x[b] = w_word
        else:
            x[b] = draw_from_rows(books.q_x_uw[u[b], w_word], rng)
        y[b] = simulate_channel(x[b], problem.channel, rng)

        if b > 0:
            result = decoder_step(books, int(decoded[b - 1]), y[b - 1], y[b], cfg.typ_tol)
            decoded[b] = result.m_hat
            v[b - 1] = result.v_prev
            dec_fail[b] = not result.found
            ambiguous[b] = result.ambiguous
        logger.debug(f"Block {b + 1}: m={chosen[b]} m_hat={decoded[b]}")
    v[B - 1] = books.v_word(int(decoded[B - 1]), 1)

    if enc_fail.any() or dec_fail.any():
        logger.warning(f"{int(enc_fail.sum())} encoder and {int(dec_fail.sum())} decoder fallbacks in {B} blocks")

    trace = SessionTrace(u, x, y, v, chosen, decoded, enc_fail, dec_fail, ambiguous)
    report = _session_report(trace, target, cfg, books)
    logger.info(f"Session seed={cfg.seed}: tv_all={report.tv_all:.4f} tv_core={report.tv_core:.4f}")
    return trace, report


def _empirical(trace: SessionTrace, target: JointDist, blocks: slice) -> JointDist:
    arrays = [a[blocks] for a in (trace.u_blocks, trace.x_blocks, trace.y_blocks, trace.v_blocks)]
    return empirical_from_indices(target.variables, arrays)


def _session_report(trace: SessionTrace, target: JointDist, cfg: SimConfig, books: Codebooks) -> SimReport:
    target = reorder(target, BASE)
    empirical_all = _empirical(trace, target, slice(None))
    core = slice(1, trace.blocks - 1) if trace.blocks > 2 else slice(None)
    empirical_core = _empirical(trace, target, core)
    tv_all = float(0.5 * np.abs(empirical_all.mass - target.mass).sum())
    tv_core = float(0.5 * np.abs(empirical_core.mass - target.mass).sum())
    error = int(tv_all >= cfg.coord_tol)
    return SimReport(
        empirical_all=empirical_all,
        empirical_core=empirical_core,
        tv_all=tv_all,
        tv_core=tv_core,
        p_error_estimate=float(error),
        confidence_interval=_error_interval(error, 1),
        failure_counts={
            "encoder": int(trace.encoder_failures.sum()),
            "decoder": int(trace.decoder_failures.sum()),
            "ambiguous": int(trace.ambiguities.sum()),
        },
        rate=books.rate,
        message_count=books.message_count,
        tv_all_per_trial=[tv_all],
        tv_core_per_trial=[tv_core],
    )


def estimate_error_probability(problem: CoordinationProblem, E: JointDist, cfg: SimConfig) -> SimReport:
    """
    Fraction of sessions whose empirical distribution misses the target by coord_tol or more.

    Trial t runs with seed cfg.seed + t and, unless cfg.fixed_codebook, its
    own codebooks. Empirical distributions are pooled over trials and the
    reported distances are medians.
    """
    if cfg.trials < 1:
        raise ZeroTrialsError("At least one trial is required to estimate the error probability")

    reports = []
    for t in range(cfg.trials):
        trial_cfg = replace(cfg, seed=cfg.seed + t)
        _, report = run_session(problem, E, trial_cfg, cfg.seed if cfg.fixed_codebook else None)
        reports.append(report)

    variables = reports[0].empirical_all.variables
    pooled_all = JointDist.normalized(variables, sum(r.empirical_all.mass for r in reports))
    pooled_core = JointDist.normalized(variables, sum(r.empirical_core.mass for r in reports))
    errors = sum(int(r.p_error_estimate) for r in reports)
    failures = {key: sum(r.failure_counts[key] for r in reports) for key in reports[0].failure_counts}
    tv_all = [r.tv_all for r in reports]
    tv_core = [r.tv_core for r in reports]

    summary = SimReport(
        empirical_all=pooled_all,
        empirical_core=pooled_core,
        tv_all=float(np.median(tv_all)),
        tv_core=float(np.median(tv_core)),
        p_error_estimate=errors / cfg.trials,
        confidence_interval=_error_interval(errors, cfg.trials),
        failure_counts=failures,
        trials=cfg.trials,
        rate=reports[0].rate,
        message_count=reports[0].message_count,
        tv_all_per_trial=tv_all,
        tv_core_per_trial=tv_core,
    )
    logger.info(f"Error probability {summary.p_error_estimate:.3f} over {cfg.trials} trials")
    return summary


def trace_frame(trace: SessionTrace) -> pd.DataFrame:
    """One row per (block, position) with symbol indices, codeword indices and failure flags"""
    B, n = trace.u_blocks.shape
    block = np.repeat(np.arange(1, B + 1), n)
    return pd.DataFrame(
        {
            "block": block,
            "position": np.tile(np.arange(1, n + 1), B),
            "u": trace.u_blocks.ravel(),
            "x": trace.x_blocks.ravel(),
            "y": trace.y_blocks.ravel(),
            "v": trace.v_blocks.ravel(),
            "index": trace.chosen_indices[block - 1],
            "decoded_index": trace.decoded_indices[block - 1],
            "encoder_failure": trace.encoder_failures[block - 1],
            "decoder_failure": trace.decoder_failures[block - 1],
        }
    )
