import numpy as np
import pytest

from conftest import random_spd
from lisreduce.errors import ConfigError, SingularSystemError
from lisreduce.forward import (
    ROTATION,
    TRANSLATION,
    LinearForwardProblem,
    ObservationOperator,
    StaticLinearSystem,
    apply_forward,
    assemble_dense_G,
    draw_observation_indices,
    generate_data,
)
from lisreduce.gaussian import GaussianBelief
from lisreduce.reduction import numerical_rank


def small_problem(rng, d=5, idx=(0, 3), noise_var=0.1):
    system = StaticLinearSystem(random_spd(rng, d))
    prior = GaussianBelief(rng.standard_normal(d), rng.standard_normal((d, d)))
    return LinearForwardProblem(system, ObservationOperator(idx), prior, GaussianBelief.isotropic(len(idx), noise_var))


def test_zero_forcing_gives_zero(rng):
    prob = small_problem(rng)
    np.testing.assert_array_equal(apply_forward(prob, np.zeros(5)), np.zeros(2))


def test_apply_forward_matches_dense_inverse(rng):
    prob = small_problem(rng)
    f = rng.standard_normal(5)
    ref = (np.linalg.inv(prob.system.K) @ f)[[0, 3]]
    np.testing.assert_allclose(apply_forward(prob, f), ref, rtol=1e-12)


def test_bar_tip_displacement_under_constant_load(bar):
    idx = ObservationOperator((bar.d - 1,))
    prob = LinearForwardProblem(bar.system, idx, bar.prior, GaussianBelief.isotropic(1, 1e-5))
    f = bar.nodal_load(np.full(bar.n_elements, 4e6))
    assert apply_forward(prob, f)[0] == pytest.approx(0.02, rel=1e-12)


def test_identity_system_gives_selection():
    system = StaticLinearSystem(np.eye(3))
    prob = LinearForwardProblem(system, ObservationOperator((0, 2)), GaussianBelief.isotropic(3, 1.0), GaussianBelief.isotropic(2, 1.0))
    np.testing.assert_array_equal(assemble_dense_G(prob), [[1, 0, 0], [0, 0, 1]])


def test_dense_G_consistent_with_apply(rng):
    prob = small_problem(rng)
    F = rng.standard_normal((5, 50))
    for f in F.T:
        np.testing.assert_allclose(prob.G @ f, apply_forward(prob, f), rtol=1e-12, atol=1e-14)
    assert not prob.G.flags.writeable


def test_bar_G_has_full_rank(bar_setup):
    s = np.linalg.svd(bar_setup.G, compute_uv=False)
    assert numerical_rank(s) == 10


def test_noiseless_data_is_exact(rng):
    prob = small_problem(rng)
    prob = LinearForwardProblem(prob.system, prob.obs, prob.prior, GaussianBelief(np.zeros(2), np.zeros((2, 2))))
    f, y = generate_data(prob, np.random.default_rng(1))
    np.testing.assert_allclose(y, prob.G @ f, rtol=1e-12)


def test_data_replay_is_deterministic(rng):
    prob = small_problem(rng)
    a = generate_data(prob, np.random.default_rng(5))
    b = generate_data(prob, np.random.default_rng(5))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_data_marginal_variance_monte_carlo(bar_setup):
    prob = bar_setup.problem
    rng = np.random.default_rng(11)
    Y = np.array([generate_data(prob, rng)[1] for _ in range(10_000)])
    GS = prob.G @ prob.prior.sqrt_factor
    expected = np.einsum("ij,ij->i", GS, GS) + 1e-5
    np.testing.assert_allclose(Y.var(axis=0, ddof=1), expected, rtol=0.05)


def test_observation_indices_exhaustive_and_deterministic(tunnel):
    n_t = tunnel.system.translational_dofs.size
    obs = draw_observation_indices(tunnel.system, n_t, np.random.default_rng(0))
    assert sorted(obs.observed_indices) == list(tunnel.system.translational_dofs)
    a = draw_observation_indices(tunnel.system, 10, np.random.default_rng(4))
    b = draw_observation_indices(tunnel.system, 10, np.random.default_rng(4))
    assert a == b
    assert all(tunnel.system.dof_kinds[i] == TRANSLATION for i in a.observed_indices)
    with pytest.raises(ConfigError):
        draw_observation_indices(tunnel.system, n_t + 1, np.random.default_rng(0))


def test_observation_indices_uniform(bar):
    rng = np.random.default_rng(2)
    counts = np.zeros(bar.d)
    for _ in range(10_000):
        counts[draw_observation_indices(bar.system, 1, rng).observed_indices[0]] += 1
    freq = counts / 10_000
    assert freq.min() >= 0.007 and freq.max() <= 0.013


def test_system_validation():
    with pytest.raises(ValueError, match="symmetric"):
        StaticLinearSystem([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError, match="square"):
        StaticLinearSystem(np.ones((2, 3)))
    with pytest.raises(ValueError, match="dof_kinds"):
        StaticLinearSystem(np.eye(2), dof_kinds=[TRANSLATION, "twist"])
    with pytest.raises(SingularSystemError):
        StaticLinearSystem([[1.0, 1.0], [1.0, 1.0]]).solve(np.ones(2))
    with pytest.raises(ValueError, match="distinct"):
        ObservationOperator((1, 1))
    s = StaticLinearSystem(np.eye(2), dof_kinds=[TRANSLATION, ROTATION])
    np.testing.assert_array_equal(s.translational_dofs, [0])


def test_problem_dimension_checks():
    system = StaticLinearSystem(np.eye(3))
    with pytest.raises(ValueError, match="observed indices"):
        LinearForwardProblem(system, ObservationOperator((5,)), GaussianBelief.isotropic(3, 1.0), GaussianBelief.isotropic(1, 1.0))
    with pytest.raises(ValueError, match="noise dimension"):
        LinearForwardProblem(system, ObservationOperator((0,)), GaussianBelief.isotropic(3, 1.0), GaussianBelief.isotropic(2, 1.0))


def test_solve_counter():
    s = StaticLinearSystem(np.eye(3))
    s.solve(np.ones(3))
    s.solve(np.ones((3, 4)))
    assert s.solve_count == 5
