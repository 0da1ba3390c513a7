# test_coord_sim.py - Tests for codebooks, encoder/decoder searches and block-Markov sessions

import numpy as np
import pytest

from coordfb.config import SEARCH_LIMIT
from coordfb.coord_sim import (
    Codebooks,
    Scheme,
    SimConfig,
    build_codebooks,
    decoder_step,
    encoder_step,
    estimate_error_probability,
    message_count,
    run_session,
    searchable_rate,
    simulate_channel,
    trace_frame,
    typicality_tolerance,
)
from coordfb.exceptions import DomainError, RateWindowEmptyError, SymbolError, ZeroTrialsError
from coordfb.prob_core import Alphabet, Kernel, marginalize
from coordfb.settings import embed_w_equals_x

ONE_MESSAGE = dict(rate_override=0.0, scheme=Scheme.W_EQUALS_X)


def noiseless_books(problem, n=384, rate=1 / 128, seed=5):
    return Codebooks(embed_w_equals_x(problem.target()), n, rate, seed)


def test_message_count():
    assert message_count(4, 0.5) == 4
    assert message_count(10, 0.0) == 1
    assert message_count(3, 0.1) == 2
    assert message_count(200, searchable_rate(200)) == SEARCH_LIMIT
    with pytest.raises(DomainError):
        message_count(2048, 1.0)


def test_config_defaults_and_validation():
    cfg = SimConfig(coord_tol=0.2)
    assert cfg.typ_tol is None
    with pytest.raises(DomainError):
        SimConfig(typ_tol=0.0)
    with pytest.raises(DomainError):
        SimConfig(B=1)
    with pytest.raises(DomainError):
        SimConfig(delta=0.0)
    with pytest.raises(DomainError):
        SimConfig(trials=-1)


def test_codewords_do_not_depend_on_access_order(noiseless_problem):
    first = noiseless_books(noiseless_problem, n=30, rate=0.4)
    second = noiseless_books(noiseless_problem, n=30, rate=0.4)
    late = first.w_word(first.message_count)
    early = first.w_word(1)
    np.testing.assert_array_equal(second.w_word(1), early)
    np.testing.assert_array_equal(second.w_word(second.message_count), late)
    np.testing.assert_array_equal(first.v_word(3, 7), second.v_word(3, 7))
    np.testing.assert_array_equal(first.w_words(5)[2], first.w_word(3))

    other = noiseless_books(noiseless_problem, n=30, rate=0.4, seed=6)
    assert not np.array_equal(other.w_words(20), first.w_words(20))


def test_message_indices_are_checked(noiseless_problem):
    books = noiseless_books(noiseless_problem)
    assert books.message_count == 8
    with pytest.raises(SymbolError):
        books.w_word(0)
    with pytest.raises(SymbolError):
        books.v_word(1, 9)


def test_identity_channel_and_replay():
    a_x, a_y = Alphabet("X", (0, 1)), Alphabet("Y", (0, 1))
    x = np.array([0, 1, 1, 0, 1])
    assert simulate_channel(x, Kernel((a_x,), (a_y,), np.eye(2)), np.random.default_rng(0)).tolist() == x.tolist()

    bsc = Kernel((a_x,), (a_y,), np.array([[0.7, 0.3], [0.3, 0.7]]))
    long_x = np.zeros(2000, dtype=int)
    first = simulate_channel(long_x, bsc, np.random.default_rng(3))
    np.testing.assert_array_equal(first, simulate_channel(long_x, bsc, np.random.default_rng(3)))
    assert 0.25 < first.mean() < 0.35
    with pytest.raises(SymbolError):
        simulate_channel(np.array([2]), bsc, np.random.default_rng(0))


def test_encoder_falls_back_to_first_index(noiseless_problem):
    books = noiseless_books(noiseless_problem)
    u = np.zeros(384, dtype=int)
    assert encoder_step(books, 1, u, 1 - books.w_word(1), 0.5) == (1, False)
    assert encoder_step(books, 1, u, books.w_word(1), 2.0) == (1, True)


def test_decoder_recovers_sent_index(noiseless_problem):
    books = noiseless_books(noiseless_problem)
    result = decoder_step(books, 1, books.w_word(1), books.w_word(5), 0.2)
    assert result.m_hat == 5
    assert result.found
    assert not result.ambiguous
    np.testing.assert_array_equal(result.v_prev, books.v_word(1, 5))


def test_decoder_reports_ambiguity(noiseless_problem):
    books = noiseless_books(noiseless_problem)
    result = decoder_step(books, 1, books.w_word(1), books.w_word(5), 2.0)
    assert result.m_hat == 1
    assert result.found
    assert result.ambiguous


def test_session_on_noiseless_channel(noiseless_problem):
    cfg = SimConfig(n=20, B=5, seed=3, **ONE_MESSAGE)
    trace, report = run_session(noiseless_problem, noiseless_problem.target(), cfg)
    assert trace.blocks == 5
    assert trace.chosen_indices.tolist() == [1] * 5
    assert trace.decoded_indices.tolist() == [1] * 5
    np.testing.assert_array_equal(trace.x_blocks, trace.y_blocks)
    np.testing.assert_array_equal(trace.v_blocks, trace.y_blocks)
    assert report.tv_core == pytest.approx(report.tv_all, abs=1e-12)
    assert report.message_count == 1

    replay, _ = run_session(noiseless_problem, noiseless_problem.target(), cfg)
    np.testing.assert_array_equal(replay.v_blocks, trace.v_blocks)


def test_two_blocks_use_every_block_as_core(noiseless_problem):
    cfg = SimConfig(n=10, B=2, seed=1, **ONE_MESSAGE)
    _, report = run_session(noiseless_problem, noiseless_problem.target(), cfg)
    np.testing.assert_array_equal(report.empirical_core.mass, report.empirical_all.mass)


def test_empty_rate_window_is_reported(binary_problem):
    problem = binary_problem(alpha=0.1)
    with pytest.raises(RateWindowEmptyError):
        run_session(problem, problem.target(), SimConfig(n=20, B=3, scheme=Scheme.W_EQUALS_X))

    wide = binary_problem(alpha=0.45)
    with pytest.raises(RateWindowEmptyError):
        run_session(wide, wide.target(), SimConfig(n=20, B=3, delta=0.15, scheme=Scheme.W_EQUALS_X))


def test_error_estimate(noiseless_problem):
    cfg = SimConfig(n=20, B=3, seed=9, trials=3, **ONE_MESSAGE)
    summary = estimate_error_probability(noiseless_problem, noiseless_problem.target(), cfg)
    assert summary.trials == 3
    assert len(summary.tv_all_per_trial) == 3
    assert 0.0 <= summary.p_error_estimate <= 1.0
    low, high = summary.confidence_interval
    assert low <= summary.p_error_estimate <= high
    assert summary.to_dict()["failure_counts"].keys() == {"encoder", "decoder", "ambiguous"}

    with pytest.raises(ZeroTrialsError):
        estimate_error_probability(noiseless_problem, noiseless_problem.target(), SimConfig(trials=0, **ONE_MESSAGE))


def test_trace_frame(noiseless_problem):
    cfg = SimConfig(n=7, B=3, seed=2, **ONE_MESSAGE)
    trace, _ = run_session(noiseless_problem, noiseless_problem.target(), cfg)
    frame = trace_frame(trace)
    assert len(frame) == 21
    assert {"block", "position", "u", "x", "y", "v", "index", "decoded_index"} <= set(frame.columns)
    assert frame["block"].tolist()[:8] == [1] * 7 + [2]


def test_typicality_tolerance_scales_with_block_length(noiseless_problem):
    target = noiseless_problem.target()
    assert typicality_tolerance(target, 100) == pytest.approx(0.1)
    assert typicality_tolerance(target, 400) == pytest.approx(0.05)
    assert typicality_tolerance(target, 100, sigmas=4.0) == pytest.approx(0.2)
    assert typicality_tolerance(marginalize(target, "U"), 50) == pytest.approx(1 / 50)


def test_iid_tuples_pass_derived_typicality(binary_problem):
    books = Codebooks(embed_w_equals_x(binary_problem(alpha=0.45).target()), 200, 0.06, 7)
    target = books.encoder_target
    draws = np.random.default_rng(11).choice(target.mass.size, size=(500, 200), p=target.mass.ravel())
    counts = np.stack([np.bincount(row, minlength=target.mass.size) for row in draws])
    tv = 0.5 * np.abs(counts / 200 - target.mass.ravel()).sum(axis=1)
    assert np.mean(tv < typicality_tolerance(target, 200)) >= 0.99


def test_codebooks_are_capped_at_searchable_size(binary_problem):
    target = binary_problem(alpha=0.45).target()
    E = embed_w_equals_x(target)
    books = build_codebooks(E, SimConfig(n=50, scheme=Scheme.W_EQUALS_X), target=target)
    assert books.rate == pytest.approx(searchable_rate(50))
    assert books.message_count == SEARCH_LIMIT
    assert books.search_limit == SEARCH_LIMIT

    override = build_codebooks(E, SimConfig(n=50, rate_override=0.1, scheme=Scheme.W_EQUALS_X), target=target)
    assert override.message_count == 32


def test_codewords_follow_codebook_distributions(binary_problem):
    books = Codebooks(embed_w_equals_x(binary_problem(alpha=0.45).target()), 200, 0.06, 7)
    assert books.message_count == 4096
    w = books.w_words(books.message_count)
    w_freq = np.bincount(w.ravel(), minlength=books.q_w.size) / w.size
    assert 0.5 * np.abs(w_freq - books.q_w).sum() < 0.01

    w_one = books.w_word(1)
    v = books.v_words(1, books.message_count)
    for letter in range(books.q_w.size):
        column = v[:, w_one == letter].ravel()
        freq = np.bincount(column, minlength=books.q_v_w.shape[1]) / column.size
        assert 0.5 * np.abs(freq - books.q_v_w[letter]).sum() < 0.02


def test_session_channel_outputs_follow_channel(binary_problem):
    problem = binary_problem(alpha=0.45)
    cfg = SimConfig(n=200, B=10, seed=4, scheme=Scheme.W_EQUALS_X)
    trace, _ = run_session(problem, problem.target(), cfg)
    assert np.mean(trace.y_blocks != trace.x_blocks) == pytest.approx(0.1, abs=0.03)


def test_error_estimate_is_reproducible(binary_problem):
    problem = binary_problem(alpha=0.45)
    cfg = SimConfig(n=30, B=3, seed=12, trials=2, scheme=Scheme.W_EQUALS_X)
    first = estimate_error_probability(problem, problem.target(), cfg)
    second = estimate_error_probability(problem, problem.target(), cfg)
    assert first.to_dict() == second.to_dict()
    np.testing.assert_array_equal(first.empirical_all.mass, second.empirical_all.mass)
    np.testing.assert_array_equal(first.empirical_core.mass, second.empirical_core.mass)


def test_noiseless_sessions_coordinate_across_seeds(noiseless_problem):
    tv = [
        run_session(noiseless_problem, noiseless_problem.target(), SimConfig(n=50, B=5, seed=s, **ONE_MESSAGE))[1].tv_all
        for s in range(20)
    ]
    assert np.median(tv) <= 0.1
    assert max(tv) < 0.3


@pytest.mark.slow
def test_core_distance_does_not_grow_with_block_length(binary_problem):
    problem = binary_problem(alpha=0.45, noise=0.1)
    medians = []
    for n in (50, 100, 200):
        cfg = SimConfig(n=n, B=20, trials=50, scheme=Scheme.W_EQUALS_X)
        medians.append(estimate_error_probability(problem, problem.target(), cfg).tv_core)
    assert medians[1] <= medians[0] + 0.01
    assert medians[2] <= medians[1] + 0.01
