import numpy as np
import pytest

from itosample.brownian import IteratedIntegrals, kpw_iterated_integrals, sample_increments
from itosample.core import DiffusionModel, ParticleSet, RngStream, langevin_diffusion
from itosample.models import (GaussianMixtureSpec, PseudoHuberSpec, blr_generate,
                              blr_potential, gaussian_mixture_potential,
                              pseudo_huber_diffusion, quadratic_potential,
                              student_t_generate, student_t_diffusion)
from itosample.schemes import (ChainDivergedError, SchemeConfig, SchemeKind, Trajectory,
                               em_step, simulate, srk_id_step, srk_ld_step)

OU = quadratic_potential(1)
OU_DIFFUSION = langevin_diffusion(OU)


def linear_sigma_model(drift_coef=-0.5):
    """d = m = 1 with sigma(x) = x, the textbook multiplicative-noise case."""
    def drift(x):
        return drift_coef * np.asarray(x, dtype=np.float64)

    def sigma(x):
        return np.asarray(x, dtype=np.float64)[..., None]

    return DiffusionModel(drift=drift, sigma=sigma, dim=1, noise_dim=1)


def milstein_step(x, b, sigma, dsigma, h, inc):
    """Hand-coded scalar Milstein update, the oracle for SRK-ID on d = m = 1."""
    return (x + h * b(x) + sigma(x) * inc
            + 0.5 * sigma(x) * dsigma(x) * (inc ** 2 - h))


class TestEmStep:
    def test_zero_noise_gradient_step(self):
        out = em_step(np.array([1.0]), OU_DIFFUSION, 0.1, np.array([0.0]))
        assert np.allclose(out, 0.9, atol=1e-15)

    def test_unit_noise(self):
        out = em_step(np.array([1.0]), OU_DIFFUSION, 0.1, np.array([1.0]))
        assert np.allclose(out, 0.9 + np.sqrt(0.2), atol=1e-15)

    def test_mixture_fixed_point_at_origin(self):
        pot = gaussian_mixture_potential(GaussianMixtureSpec(a=np.array([0.6, -0.1])))
        model = langevin_diffusion(pot)
        out = em_step(np.zeros(2), model, 0.37, np.zeros(2))
        assert np.allclose(out, 0.0, atol=1e-14)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            em_step(np.array([1.0, 2.0]), OU_DIFFUSION, 0.1, np.array([0.0, 0.0]))
        with pytest.raises(ValueError):
            em_step(np.array([1.0]), OU_DIFFUSION, 0.1, np.array([0.0, 0.0]))

    def test_batched_rows_match_single_calls(self):
        xs = np.array([[0.5], [-1.2], [2.0]])
        xis = np.array([[0.1], [0.0], [-0.7]])
        batch = em_step(xs, OU_DIFFUSION, 0.2, xis)
        for k in range(3):
            assert np.allclose(batch[k], em_step(xs[k], OU_DIFFUSION, 0.2, xis[k]))


class TestSrkLdStep:
    def test_zero_noise_quadratic(self):
        out = srk_ld_step(np.array([1.0]), OU, 0.1, np.zeros(1), np.zeros(1))
        assert np.allclose(out, 0.905, atol=1e-15)

    def test_constant_gradient_ignores_eta(self):
        c = np.array([0.7, -0.3])
        from itosample.core import PotentialModel
        pot = PotentialModel(value=lambda x: np.atleast_2d(x) @ c,
                             gradient=lambda x: np.broadcast_to(c, np.shape(x)).copy(),
                             dim=2)
        x = np.array([1.0, 2.0])
        xi = np.array([0.5, -0.2])
        h = 0.3
        out1 = srk_ld_step(x, pot, h, xi, np.array([10.0, -3.0]))
        out2 = srk_ld_step(x, pot, h, xi, np.array([-4.0, 8.0]))
        expected = x - h * c + np.sqrt(2 * h) * xi
        assert np.allclose(out1, expected, atol=1e-14)
        assert np.allclose(out2, expected, atol=1e-14)

    def test_zero_noise_equals_heun_two_stage(self):
        pot = gaussian_mixture_potential(GaussianMixtureSpec(a=np.array([0.5, 0.2])))
        x = np.array([0.8, -1.1])
        h = 0.17
        out = srk_ld_step(x, pot, h, np.zeros(2), np.zeros(2))
        g0 = pot.gradient(x)
        heun = x - 0.5 * h * (pot.gradient(x) + pot.gradient(x - h * g0))
        assert np.allclose(out, heun, atol=1e-14)

    def test_ou_one_step_map_is_affine(self):
        # x' = (1 - h + h^2/2) x + sqrt(2h)(1 - h/2) xi - sqrt(2h) h/sqrt(12) eta
        gen = RngStream(71).generator()
        for h in (0.05, 0.2, 0.5):
            for _ in range(20):
                x, xi, eta = gen.standard_normal(3)
                out = srk_ld_step(np.array([x]), OU, h, np.array([xi]), np.array([eta]))
                closed = ((1 - h + h * h / 2) * x
                          + np.sqrt(2 * h) * (1 - h / 2) * xi
                          - np.sqrt(2 * h) * (h / np.sqrt(12)) * eta)
                assert abs(out[0] - closed) <= 1e-12


class TestSrkIdStep:
    def test_constant_sigma_reduces_to_em(self):
        incs = sample_increments(RngStream(4), 1, 0.2)
        ii = kpw_iterated_integrals(RngStream(4), incs, 0.2, n=5)
        x = np.array([0.6])
        out = srk_id_step(x, OU_DIFFUSION, 0.2, ii)
        em = em_step(x, OU_DIFFUSION, 0.2, incs / np.sqrt(0.2))
        assert np.allclose(out, em, atol=1e-14)

    def test_zero_integrals_give_drift_step(self):
        model = linear_sigma_model()
        ii = IteratedIntegrals(increments=np.zeros(1), matrix=np.array([[0.0]]),
                               h=0.1, truncation=1)
        out = srk_id_step(np.array([2.0]), model, 0.1, ii)
        assert np.allclose(out, 2.0 + 0.1 * (-1.0), atol=1e-15)

    def test_matches_milstein_on_linear_sigma(self):
        model = linear_sigma_model(drift_coef=-0.5)
        gen = RngStream(8).generator()
        worst = 0.0
        for _ in range(1000):
            x = gen.uniform(-2.0, 2.0)
            h = gen.uniform(0.01, 0.5)
            inc = np.sqrt(h) * gen.standard_normal()
            ii = IteratedIntegrals(increments=np.array([inc]),
                                   matrix=np.array([[(inc ** 2 - h) / 2.0]]),
                                   h=h, truncation=1)
            out = srk_id_step(np.array([x]), model, h, ii)
            oracle = milstein_step(x, lambda y: -0.5 * y, lambda y: y, lambda y: 1.0, h, inc)
            worst = max(worst, abs(out[0] - oracle))
        assert worst <= 1e-12

    def test_mismatched_h_rejected(self):
        ii = IteratedIntegrals(increments=np.zeros(1), matrix=np.array([[0.0]]),
                               h=0.1, truncation=1)
        with pytest.raises(ValueError):
            srk_id_step(np.array([1.0]), linear_sigma_model(), 0.2, ii)

    def test_mismatched_noise_dim_rejected(self):
        ii = IteratedIntegrals(increments=np.zeros(2), matrix=np.zeros((2, 2)),
                               h=0.1, truncation=1)
        with pytest.raises(ValueError):
            srk_id_step(np.array([1.0]), linear_sigma_model(), 0.1, ii)


class TestSimulate:
    def test_zero_steps_returns_initial_only(self):
        initial = ParticleSet(np.array([[1.0], [2.0]]))
        traj = simulate(initial, OU, SchemeConfig(kind=SchemeKind.EM, h=0.1), 0, seed=1)
        assert len(traj.snapshots) == 1
        assert np.array_equal(traj.final.points, initial.points)

    @pytest.mark.parametrize("kind", ["em", "srk_ld", "srk_id"])
    def test_same_seed_identical_trajectories(self, kind):
        initial = ParticleSet(np.zeros((16, 1)))
        model = OU if kind == "srk_ld" else OU_DIFFUSION
        cfg = SchemeConfig(kind=kind, h=0.1, levy_truncation=10)
        a = simulate(initial, model, cfg, 25, seed=99)
        b = simulate(initial, model, cfg, 25, seed=99)
        for (sa, pa), (sb, pb) in zip(a.snapshots, b.snapshots):
            assert sa == sb
            assert np.array_equal(pa.points, pb.points)

    def test_em_reaches_biased_stationary_variance(self):
        # linear-Gaussian fixed point: v = (1 - h)^2 v + 2h  =>  v = 1 / (1 - h/2)
        h = 0.2
        initial = ParticleSet(np.zeros((100_000, 1)))
        cfg = SchemeConfig(kind=SchemeKind.EM, h=h, snapshot_stride=2000)
        traj = simulate(initial, OU, cfg, 2000, seed=424242)
        var = traj.final.points.var()
        assert abs(var - 1.0 / (1.0 - h / 2.0)) < 0.02 * (1.0 / (1.0 - h / 2.0))

    def test_divergence_aborts_with_context(self):
        initial = ParticleSet(np.full((8, 1), 3.0))
        cfg = SchemeConfig(kind=SchemeKind.EM, h=2.5)
        with pytest.raises(ChainDivergedError) as err:
            simulate(initial, OU, cfg, 500, seed=5)
        assert err.value.step > 0
        assert err.value.scheme == "em"
        assert 0 <= err.value.particle < 8

    def test_snapshot_stride_and_final_always_recorded(self):
        initial = ParticleSet(np.zeros((4, 1)))
        cfg = SchemeConfig(kind=SchemeKind.EM, h=0.1, snapshot_stride=4)
        traj = simulate(initial, OU, cfg, 10, seed=3)
        assert [s for s, _ in traj.snapshots] == [0, 4, 8, 10]

    def test_srk_ld_requires_potential(self):
        initial = ParticleSet(np.zeros((2, 1)))
        with pytest.raises(TypeError):
            simulate(initial, OU_DIFFUSION, SchemeConfig(kind="srk_ld", h=0.1), 1, seed=1)

    @pytest.mark.parametrize("name,model,kind,h,steps", [
        ("ou-em", OU_DIFFUSION, "em", 0.5, 10_000),
        ("ou-srk_ld", OU, "srk_ld", 0.5, 10_000),
        ("mixture-em", langevin_diffusion(gaussian_mixture_potential(
            GaussianMixtureSpec(a=np.array([0.3, 0.4])))), "em", 0.5, 10_000),
        ("mixture-srk_ld", gaussian_mixture_potential(
            GaussianMixtureSpec(a=np.array([0.3, 0.4]))), "srk_ld", 0.5, 10_000),
        ("blr-em", langevin_diffusion(blr_potential(blr_generate(5, 40, 2))), "em", 0.2, 10_000),
        ("pseudo_huber-em", pseudo_huber_diffusion(
            PseudoHuberSpec(beta=0.33, gamma=0.5, dim=1)), "em", 0.2, 10_000),
        ("pseudo_huber-srk_id", pseudo_huber_diffusion(
            PseudoHuberSpec(beta=0.33, gamma=0.5, dim=1)), "srk_id", 0.2, 10_000),
        ("student_t-em", student_t_diffusion(student_t_generate(21, 50, 2)), "em",
         0.002, 10_000),
    ])
    def test_second_moments_stay_bounded(self, name, model, kind, h, steps):
        d = model.dim
        initial = ParticleSet(np.zeros((64, d)))
        cfg = SchemeConfig(kind=kind, h=h, snapshot_stride=steps, levy_truncation=10)
        traj = simulate(initial, model, cfg, steps, seed=17)
        second_moment = float(np.mean(np.sum(traj.final.points ** 2, axis=1)))
        assert np.isfinite(second_moment)
        assert second_moment < 1e3


class TestConfigAndTrajectory:
    def test_scheme_config_validation(self):
        with pytest.raises(ValueError):
            SchemeConfig(kind="em", h=0.0)
        with pytest.raises(ValueError):
            SchemeConfig(kind="srk_id", h=0.1, levy_truncation=0)
        with pytest.raises(ValueError):
            SchemeConfig(kind="nope", h=0.1)

    def test_trajectory_requires_increasing_steps(self):
        ps = ParticleSet(np.zeros((1, 1)))
        with pytest.raises(ValueError):
            Trajectory(snapshots=((0, ps), (0, ps)))
