import numpy as np
import pytest

from itosample.core import (DiffusionModel, ParticleSet, PotentialModel, RngStream,
                            as_point, finite_difference_gradient, langevin_diffusion,
                            standard_normal_vector)
from itosample.models import GaussianMixtureSpec, gaussian_mixture_potential, quadratic_potential


class TestRngStream:
    def test_identical_key_identical_draws(self):
        s = RngStream(12345, particle=3, step=7, substream=1)
        a = standard_normal_vector(s, 16)
        b = standard_normal_vector(s, 16)
        assert np.array_equal(a, b)

    def test_distinct_coordinates_differ(self):
        base = RngStream(12345)
        draws = [
            standard_normal_vector(base, 8),
            standard_normal_vector(base.child(particle=1), 8),
            standard_normal_vector(base.child(step=1), 8),
            standard_normal_vector(base.child(substream=1), 8),
        ]
        for i in range(len(draws)):
            for j in range(i + 1, len(draws)):
                assert not np.array_equal(draws[i], draws[j])

    def test_streams_statistically_independent(self):
        n = 200_000
        a = RngStream(9, substream=0).generator().standard_normal(n)
        b = RngStream(9, substream=1).generator().standard_normal(n)
        corr = float(np.mean(a * b))
        assert abs(corr) < 4.0 / np.sqrt(n)

    def test_child_replaces_only_given_coordinates(self):
        s = RngStream(5, particle=1, step=2, substream=3)
        c = s.child(step=9)
        assert (c.seed, c.particle, c.step, c.substream) == (5, 1, 9, 3)


class TestStandardNormalVector:
    def test_rejects_zero_dimension(self):
        with pytest.raises(ValueError):
            standard_normal_vector(RngStream(1), 0)

    def test_pooled_moments(self):
        # 10^6 scalar draws pooled over 2000 op calls
        draws = np.concatenate([
            standard_normal_vector(RngStream(42, particle=i), 500) for i in range(2000)
        ])
        assert draws.size == 1_000_000
        assert abs(draws.mean()) < 4.0 / np.sqrt(draws.size)
        assert abs(draws.var() - 1.0) < 0.01


class TestFiniteDifferenceGradient:
    def test_quadratic_is_exact_up_to_rounding(self):
        model = quadratic_potential(2)
        grad = finite_difference_gradient(model, np.array([1.0, 2.0]), step=1e-5)
        assert np.allclose(grad, [1.0, 2.0], atol=1e-8)

    def test_constant_potential_gives_zero(self):
        model = PotentialModel(value=lambda x: np.zeros(np.atleast_2d(x).shape[0]),
                               gradient=lambda x: np.zeros_like(x), dim=3)
        grad = finite_difference_gradient(model, np.array([0.3, -1.0, 2.0]))
        assert np.allclose(grad, 0.0, atol=1e-12)

    def test_mixture_gradient_vanishes_at_origin(self):
        # the two modes are symmetric about zero
        model = gaussian_mixture_potential(GaussianMixtureSpec(a=np.array([0.4, -0.2])))
        grad = finite_difference_gradient(model, np.zeros(2))
        assert np.allclose(grad, 0.0, atol=1e-9)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(quadratic_potential(1), np.array([1.0]), step=0.0)

    def test_nonfinite_value_raises(self):
        bad = PotentialModel(value=lambda x: np.full(np.atleast_2d(x).shape[0], np.nan),
                             gradient=lambda x: x, dim=1)
        with pytest.raises(FloatingPointError):
            finite_difference_gradient(bad, np.array([1.0]))


class TestTypes:
    def test_as_point_validation(self):
        assert as_point([1.0, 2.0]).shape == (2,)
        with pytest.raises(ValueError):
            as_point([np.inf])
        with pytest.raises(ValueError):
            as_point([[1.0, 2.0]])
        with pytest.raises(ValueError):
            as_point([1.0, 2.0], d=3)

    def test_particle_set_validation(self):
        ps = ParticleSet(np.zeros((4, 2)))
        assert ps.size == 4 and ps.dim == 2
        with pytest.raises(ValueError):
            ParticleSet(np.zeros((0, 2)))
        with pytest.raises(ValueError):
            ParticleSet(np.array([[1.0, np.nan]]))

    def test_particle_set_promotes_single_point(self):
        ps = ParticleSet(np.array([1.0, 2.0, 3.0]))
        assert ps.points.shape == (1, 3)


class TestLangevinDiffusion:
    def test_drift_and_diffusion(self):
        model = langevin_diffusion(quadratic_potential(3))
        x = np.array([1.0, -2.0, 0.5])
        assert np.allclose(model.drift(x), -x)
        assert np.allclose(model.sigma(x), np.sqrt(2.0) * np.eye(3))
        assert model.noise_dim == 3

    def test_columns_match_matrix(self):
        model = langevin_diffusion(quadratic_potential(2))
        x = np.array([0.3, 0.7])
        full = np.asarray(model.sigma(x))
        for i in range(model.noise_dim):
            assert np.array_equal(model.sigma_column(x, i), full[:, i])
