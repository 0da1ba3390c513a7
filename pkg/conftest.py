# conftest.py - Shared fixtures for the coordfb test modules

import numpy as np
import pytest

from coordfb.binary_example import ExampleParams, make_target
from coordfb.prob_core import Alphabet, Kernel
from coordfb.settings import CoordinationProblem, SettingId


def bsc(noise: float) -> np.ndarray:
    return np.array([[1 - noise, noise], [noise, 1 - noise]])


@pytest.fixture
def binary_problem():
    """Factory for the binary source / binary symmetric channel example"""

    def make(alpha: float = 0.4, noise: float = 0.1, setting: SettingId = SettingId.SC_ENC_FB) -> CoordinationProblem:
        return make_target(ExampleParams(alpha, noise), setting)

    return make


@pytest.fixture
def small_problem():
    """
    Factory for 2x2x2x2 problems.

    `policy` is Q(x) or, with two rows, Q(x|u); `decoder` is a table over
    `decoder_given` followed by V.
    """

    def make(
        setting: SettingId = SettingId.CAUSAL_ENC_FB,
        source=(0.5, 0.5),
        policy=(0.5, 0.5),
        noise: float = 0.1,
        decoder=None,
        decoder_given=("U", "Y"),
    ) -> CoordinationProblem:
        a = {name: Alphabet(name, (0, 1)) for name in ("U", "X", "Y", "V")}
        policy = np.array(policy, dtype=float)
        policy_given = (a["U"],) if policy.ndim == 2 else ()
        if decoder is None:
            decoder = np.full((2,) * len(decoder_given) + (2,), 0.5)
        return CoordinationProblem(
            setting=setting,
            source=Kernel((), (a["U"],), np.array(source, dtype=float)),
            channel=Kernel((a["X"],), (a["Y"],), bsc(noise)),
            input_policy=Kernel(policy_given, (a["X"],), policy),
            target_kernel=Kernel(tuple(a[n] for n in decoder_given), (a["V"],), np.array(decoder, dtype=float)),
        )

    return make


@pytest.fixture
def noiseless_problem():
    """Constant source, uniform bits over an identity channel, V copying Y"""
    a_u, a_x, a_y, a_v = Alphabet("U", (0,)), Alphabet("X", (0, 1)), Alphabet("Y", (0, 1)), Alphabet("V", (0, 1))
    return CoordinationProblem(
        setting=SettingId.SC_ENC_FB,
        source=Kernel((), (a_u,), np.array([1.0])),
        channel=Kernel((a_x,), (a_y,), np.eye(2)),
        input_policy=Kernel((), (a_x,), np.array([0.5, 0.5])),
        target_kernel=Kernel((a_y,), (a_v,), np.eye(2)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_problem():
    """
    Factory for problems with Dirichlet-drawn factors.

    The input policy reads U only with `source_policy`, so the default
    problems satisfy every strictly causal encoding requirement.
    """

    def make(
        rng: np.random.Generator,
        sizes=(2, 2, 2, 2),
        setting: SettingId = SettingId.SC_ENC_FB,
        source_policy: bool = False,
    ) -> CoordinationProblem:
        n_u, n_x, n_y, n_v = sizes
        a = {name: Alphabet(name, tuple(range(size))) for name, size in zip(("U", "X", "Y", "V"), sizes)}
        if source_policy:
            policy = Kernel((a["U"],), (a["X"],), rng.dirichlet(np.ones(n_x), size=n_u))
        else:
            policy = Kernel((), (a["X"],), rng.dirichlet(np.ones(n_x)))
        return CoordinationProblem(
            setting=setting,
            source=Kernel((), (a["U"],), rng.dirichlet(np.ones(n_u))),
            channel=Kernel((a["X"],), (a["Y"],), rng.dirichlet(np.ones(n_y), size=n_x)),
            input_policy=policy,
            target_kernel=Kernel(
                (a["U"], a["X"], a["Y"]), (a["V"],), rng.dirichlet(np.ones(n_v), size=(n_u, n_x, n_y))
            ),
        )

    return make
