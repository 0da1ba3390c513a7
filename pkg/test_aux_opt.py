# test_aux_opt.py - Tests for the auxiliary-variable optimizer and the brute-force oracle

import numpy as np
import pytest

from coordfb.aux_opt import (
    MULTISTART,
    ORACLE,
    OptimizerConfig,
    SplitSpace,
    brute_force_oracle,
    maximize,
    pad_aux,
    project_rows,
    repair_to_admissible,
    simplex_grid,
    split_search,
)
from coordfb.exceptions import (
    AuxiliaryFreeSettingError,
    DomainError,
    InfeasibleParameterizationError,
    OracleSizeError,
)
from coordfb.prob_core import Alphabet, JointDist, Kernel, mutual_information, total_variation
from coordfb.settings import (
    CoordinationProblem,
    SettingId,
    check_admissible,
    constraint_sc_feedback,
    embed_copy,
    embed_w_equals_x,
    evaluate_objective,
    feedback_gap_sc,
    objective_value,
)

V_GIVEN_UY = [[[0.9, 0.1], [0.3, 0.7]], [[0.6, 0.4], [0.2, 0.8]]]
QUICK = dict(restarts=2, max_iterations=10)


def test_project_rows_lands_on_simplex(rng):
    rows = rng.normal(size=(20, 5)) * 3
    projected = project_rows(rows)
    assert projected.min() >= 0
    np.testing.assert_allclose(projected.sum(axis=1), 1.0, atol=1e-12)

    on_simplex = rng.dirichlet(np.ones(5), size=10)
    np.testing.assert_allclose(project_rows(on_simplex), on_simplex, atol=1e-12)


def test_simplex_grid():
    points = simplex_grid(3, 2)
    assert points.shape == (6, 3)
    np.testing.assert_allclose(points.sum(axis=1), 1.0)
    assert {tuple(p) for p in points} >= {(1.0, 0.0, 0.0), (0.5, 0.5, 0.0), (0.0, 0.0, 1.0)}


def test_config_validation():
    with pytest.raises(DomainError):
        OptimizerConfig(restarts=0)
    with pytest.raises(DomainError):
        OptimizerConfig(aux_cardinality=0)
    assert OptimizerConfig().cardinality_for(JointDist.normalized(
        (Alphabet("A", (0, 1)), Alphabet("B", (0, 1, 2))), np.ones((2, 3))
    )) == 8


def test_auxiliary_free_settings_are_rejected(binary_problem):
    with pytest.raises(AuxiliaryFreeSettingError):
        maximize(SettingId.SC_ENC_FB, binary_problem())
    with pytest.raises(AuxiliaryFreeSettingError):
        brute_force_oracle(SettingId.SC_DEC_FB, binary_problem(), 2, 4)


def test_maximum_dominates_w_equals_x(binary_problem):
    problem = binary_problem(alpha=0.4, setting=SettingId.CAUSAL_ENC_FB)
    target = problem.target()
    solution = maximize(SettingId.CAUSAL_ENC_FB, problem, OptimizerConfig(aux_cardinality=4, **QUICK))

    assert solution.method == MULTISTART
    assert solution.aux_cardinality == 4
    assert solution.value >= constraint_sc_feedback(target) - 1e-9
    assert solution.feasibility_residual <= 1e-6
    assert check_admissible(SettingId.CAUSAL_ENC_FB, solution.extended, target, tol=1e-6).passed
    assert evaluate_objective(SettingId.CAUSAL_ENC_FB, solution.extended, target, tol=1e-6) == pytest.approx(
        solution.value, abs=1e-12
    )


def test_maximize_is_deterministic(binary_problem):
    problem = binary_problem(alpha=0.4)
    cfg = OptimizerConfig(aux_cardinality=3, seed=11, **QUICK)
    first = maximize(SettingId.SC_ENC_NOFB, problem, cfg)
    second = maximize(SettingId.SC_ENC_NOFB, problem, cfg)
    assert first.value == second.value
    assert first.label == second.label
    np.testing.assert_array_equal(first.extended.mass, second.extended.mass)


def test_single_symbol_auxiliary(small_problem):
    problem = small_problem(decoder=V_GIVEN_UY)
    target = problem.target()
    solution = maximize(SettingId.CAUSAL_ENC_FB, problem, OptimizerConfig(aux_cardinality=1, **QUICK))
    assert solution.value == pytest.approx(-mutual_information(target, "U", "V", "Y"), abs=1e-4)


def test_single_symbol_auxiliary_cannot_reach_binary_target(binary_problem):
    with pytest.raises(InfeasibleParameterizationError):
        maximize(SettingId.CAUSAL_ENC_FB, binary_problem(alpha=0.4), OptimizerConfig(aux_cardinality=1, **QUICK))


def test_warm_start_never_loses_value(binary_problem):
    problem = binary_problem(alpha=0.3)
    small = maximize(SettingId.SC_ENC_NOFB, problem, OptimizerConfig(aux_cardinality=2, **QUICK))
    larger = maximize(SettingId.SC_ENC_NOFB, problem, OptimizerConfig(aux_cardinality=3, **QUICK), warm_start=small)
    assert larger.value >= small.value - 1e-12


def test_pad_aux(binary_problem):
    E = embed_w_equals_x(binary_problem().target())
    padded = pad_aux(E, SettingId.CAUSAL_ENC_FB, 5)
    assert padded.alphabet("W").size == 5
    assert objective_value(SettingId.CAUSAL_ENC_FB, padded) == pytest.approx(
        objective_value(SettingId.CAUSAL_ENC_FB, E), abs=1e-12
    )
    with pytest.raises(DomainError):
        pad_aux(E, SettingId.CAUSAL_ENC_FB, 1)


def test_repair_keeps_admissible_extension(binary_problem):
    target = binary_problem(alpha=0.4).target()
    E = embed_w_equals_x(target)
    repaired = repair_to_admissible(SettingId.CAUSAL_ENC_FB, E, target)
    assert total_variation(repaired, E) < 1e-9


def test_repair_restores_target_marginal(binary_problem):
    target = binary_problem(alpha=0.4).target()
    E = embed_w_equals_x(target)
    tilted = JointDist.normalized(E.variables, E.mass * np.array([1.0, 1.5])[None, :, None, None, None])
    assert not check_admissible(SettingId.CAUSAL_ENC_FB, tilted, target, tol=1e-6).passed

    repaired = repair_to_admissible(SettingId.CAUSAL_ENC_FB, tilted, target)
    assert check_admissible(SettingId.CAUSAL_ENC_FB, repaired, target, tol=1e-6).passed
    assert total_variation(repaired, E) < 1e-6


def test_oracle_on_single_symbol_alphabets():
    a = {name: Alphabet(name, (0,)) for name in ("U", "X", "Y", "V")}
    problem = CoordinationProblem(
        setting=SettingId.CAUSAL_ENC_FB,
        source=Kernel((), (a["U"],), np.array([1.0])),
        channel=Kernel((a["X"],), (a["Y"],), np.array([[1.0]])),
        input_policy=Kernel((), (a["X"],), np.array([1.0])),
        target_kernel=Kernel((a["U"], a["X"], a["Y"]), (a["V"],), np.ones((1, 1, 1, 1))),
    )
    solution = brute_force_oracle(SettingId.CAUSAL_ENC_FB, problem, 1, 2)
    assert solution.method == ORACLE
    assert solution.value == pytest.approx(0.0, abs=1e-12)


def test_oracle_finds_w_equals_x(binary_problem):
    problem = binary_problem(alpha=0.4)
    solution = brute_force_oracle(SettingId.CAUSAL_ENC_FB, problem, 2, 4)
    assert solution.value >= constraint_sc_feedback(problem.target()) - 1e-9
    assert check_admissible(SettingId.CAUSAL_ENC_FB, solution.extended, problem.target(), tol=1e-6).passed


def test_oracle_guards(binary_problem):
    with pytest.raises(OracleSizeError):
        brute_force_oracle(SettingId.CAUSAL_ENC_FB, binary_problem(), 66, 4)
    with pytest.raises(DomainError):
        brute_force_oracle(SettingId.CAUSAL_ENC_FB, binary_problem(), 2, 1)


def test_split_space_rebuilds_w_equals_x(binary_problem):
    target = binary_problem(alpha=0.4).target()
    space = SplitSpace(SettingId.CAUSAL_ENC_FB, target, 2)
    E = embed_w_equals_x(target)
    values, masses = space.evaluate(space.free_of(E)[None])
    assert values[0] == pytest.approx(constraint_sc_feedback(target), abs=1e-9)
    assert total_variation(space.to_joint(masses[0]), E) < 1e-9


def test_split_space_keeps_source_independent_of_auxiliary(small_problem, rng):
    problem = small_problem(policy=[[0.8, 0.2], [0.3, 0.7]], decoder=V_GIVEN_UY)
    target = problem.target()
    space = SplitSpace(SettingId.CAUSAL_ENC_FB, target, 2)
    assert len(space.enumerated) == 3
    values, masses = space.evaluate(rng.dirichlet(np.ones(2), size=(40, 3)))
    for value, mass in zip(values, masses):
        if np.isfinite(value):
            E = space.to_joint(mass)
            assert check_admissible(SettingId.CAUSAL_ENC_FB, E, target, tol=1e-6).passed
            assert value == pytest.approx(objective_value(SettingId.CAUSAL_ENC_FB, E), abs=1e-9)
    assert np.isfinite(values).any()


def test_split_search_candidates_are_admissible(small_problem):
    problem = small_problem(decoder=V_GIVEN_UY)
    target = problem.target()
    found, evaluations = split_search(SettingId.SC_ENC_NOFB, target, 2, OptimizerConfig(aux_cardinality=2, **QUICK))
    assert found
    assert evaluations > 0
    for _, E in found:
        assert check_admissible(SettingId.SC_ENC_NOFB, E, target, tol=1e-6).passed


def test_split_search_skips_large_kernels(binary_problem):
    found, evaluations = split_search(
        SettingId.CAUSAL_ENC_FB, binary_problem().target(), 18, OptimizerConfig(aux_cardinality=18)
    )
    assert found == []
    assert evaluations == 0


def test_oracle_grid_points_are_ranked_in_enumeration_order(small_problem):
    space = SplitSpace(SettingId.SC_ENC_NOFB, small_problem(decoder=V_GIVEN_UY).target(), 2)
    top = space.grid_top(4, 5)
    values = [value for _, value, _, _ in top]
    assert values == sorted(values, reverse=True)
    for (i, a, _, _), (j, b, _, _) in zip(top, top[1:]):
        if a == b:
            assert i < j


def test_maximize_reaches_grid_optimum_of_no_feedback_set(small_problem):
    problem = small_problem(decoder=V_GIVEN_UY)
    oracle = brute_force_oracle(SettingId.SC_ENC_NOFB, problem, 2, 8)
    solution = maximize(SettingId.SC_ENC_NOFB, problem, OptimizerConfig(aux_cardinality=2, **QUICK))
    assert solution.value >= oracle.value - 1e-3
    assert check_admissible(SettingId.SC_ENC_NOFB, solution.extended, problem.target(), tol=1e-6).passed


def xor_decoder(p: float) -> np.ndarray:
    """V = U xor X with probability p, whatever Y is"""
    table = np.empty((2, 2, 2, 2))
    for u in range(2):
        for x in range(2):
            table[u, x, :, u ^ x] = p
            table[u, x, :, 1 - (u ^ x)] = 1 - p
    return table


SANDWICH_FIXTURES = [
    dict(policy=[[0.8, 0.2], [0.3, 0.7]], decoder=V_GIVEN_UY),
    dict(decoder=V_GIVEN_UY),
    dict(source=(0.3, 0.7), policy=(0.6, 0.4), noise=0.2, decoder=[[[0.7, 0.3], [0.1, 0.9]], [[0.5, 0.5], [0.95, 0.05]]]),
    dict(decoder=xor_decoder(0.85), decoder_given=("U", "X", "Y")),
    dict(policy=[[0.9, 0.1], [0.2, 0.8]], noise=0.05, decoder=[[[0.6, 0.4], [0.25, 0.75]], [[0.8, 0.2], [0.4, 0.6]]]),
]


@pytest.mark.slow
@pytest.mark.parametrize("fixture", SANDWICH_FIXTURES)
def test_maximize_is_not_below_fine_oracle(small_problem, fixture):
    problem = small_problem(**fixture)
    oracle = brute_force_oracle(SettingId.CAUSAL_ENC_FB, problem, 2, 64)
    solution = maximize(SettingId.CAUSAL_ENC_FB, problem, OptimizerConfig(aux_cardinality=2))
    assert solution.value >= oracle.value - 1e-3
    assert check_admissible(SettingId.CAUSAL_ENC_FB, solution.extended, problem.target(), tol=1e-6).passed


@pytest.mark.slow
def test_maximum_grows_with_cardinality(small_problem):
    problem = small_problem(decoder=V_GIVEN_UY)
    values = [
        maximize(SettingId.CAUSAL_ENC_FB, problem, OptimizerConfig(aux_cardinality=k, **QUICK)).value
        for k in range(1, 5)
    ]
    for smaller, larger in zip(values, values[1:]):
        assert larger >= smaller - 1e-9


@pytest.mark.slow
def test_feedback_never_shrinks_strictly_causal_region(random_problem, rng):
    for _ in range(20):
        problem = random_problem(rng)
        best = brute_force_oracle(SettingId.SC_ENC_NOFB, problem, 2, 4)
        assert feedback_gap_sc(problem.target(), best, problem) >= -1e-3


@pytest.mark.parametrize(
    "decoder, decoder_given",
    [
        # (U,V) independent of (X,Y)
        ([[0.75, 0.25], [0.25, 0.75]], ("U",)),
        # V reads (U,X) only, so W2 = V is admissible
        ([[[0.875, 0.125], [0.25, 0.75]], [[0.5, 0.5], [0.125, 0.875]]], ("U", "X")),
    ],
)
def test_feedback_gap_vanishes_when_v_can_be_sent_ahead(small_problem, decoder, decoder_given):
    problem = small_problem(SettingId.SC_ENC_FB, decoder=decoder, decoder_given=decoder_given)
    target = problem.target()
    copy_v = embed_copy(target, "W2", ("V",))
    assert check_admissible(SettingId.SC_ENC_NOFB, copy_v, target).passed

    best = brute_force_oracle(SettingId.SC_ENC_NOFB, problem, 2, 8)
    assert feedback_gap_sc(target, best, problem) == pytest.approx(0.0, abs=1e-3)
