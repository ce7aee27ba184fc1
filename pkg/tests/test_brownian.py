import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itosample.brownian import (brownian_with_time_integral, double_time_integral_sample,
                                kpw_batch, kpw_iterated_integrals, sample_increments)
from itosample.core import RngStream


def truncated_offdiag_variance(h, n):
    """Law of the truncated series: Var(J[l][i]) = h^2/4 + (3 h^2 / 2 pi^2) sum_{k<=n} k^-2.

    Derived from the series term variances; tends to h^2/2 as n -> inf.
    """
    partial = np.sum(1.0 / np.arange(1, n + 1) ** 2)
    return h * h / 4.0 + (3.0 * h * h / (2.0 * np.pi ** 2)) * partial


class TestSampleIncrements:
    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            sample_increments(RngStream(1), 2, 0.0)
        with pytest.raises(ValueError):
            sample_increments(RngStream(1), 0, 0.1)

    def test_deterministic_under_fixed_stream(self):
        s = RngStream(7, step=3)
        assert np.array_equal(sample_increments(s, 4, 0.25), sample_increments(s, 4, 0.25))

    def test_variance_matches_step(self):
        draws = sample_increments(RngStream(11), 2, 1.0, size=500_000)
        v = draws.var(axis=0)
        assert np.all(np.abs(v - 1.0) < 0.01)

    def test_mean_scales_with_sqrt_h(self):
        draws = sample_increments(RngStream(11), 1, 0.04, size=200_000)
        assert abs(draws.var() - 0.04) < 0.01 * 0.04 * 4


class TestIteratedIntegrals:
    def test_m1_diagonal_is_exact_without_series(self):
        incs = np.array([0.31])
        ii = kpw_iterated_integrals(RngStream(1), incs, h=0.1, n=1)
        assert ii.matrix.shape == (1, 1)
        assert ii.matrix[0, 0] == (0.31 ** 2 - 0.1) / 2.0

    @given(m=st.integers(2, 5), n=st.integers(1, 40), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_construction_identities(self, m, n, seed):
        h = 0.05
        incs = sample_increments(RngStream(seed), m, h)
        ii = kpw_iterated_integrals(RngStream(seed, substream=0), incs, h, n=n)
        outer = np.outer(incs, incs)
        # diagonal identity, exact
        assert np.array_equal(np.diag(ii.matrix), (incs ** 2 - h) / 2.0)
        # off-diagonal sum rule J[l,i] + J[i,l] = I_l I_i
        sums = ii.matrix + ii.matrix.T
        target = outer - h * np.eye(m)
        assert np.allclose(sums - np.diag(np.diag(sums)),
                           target - np.diag(np.diag(target)), atol=1e-14)
        # Levy area exactly antisymmetric
        area = ii.levy_area()
        assert np.allclose(area, -area.T, atol=1e-14)

    def test_rejects_bad_truncation_and_step(self):
        incs = np.array([0.1, 0.2])
        with pytest.raises(ValueError):
            kpw_iterated_integrals(RngStream(1), incs, h=0.1, n=0)
        with pytest.raises(ValueError):
            kpw_iterated_integrals(RngStream(1), incs, h=-0.1, n=5)

    def test_series_extension_only_appends_terms(self):
        # enlarging n adds tail terms without perturbing the earlier ones:
        # the area difference between n=20 and n=40 must itself be a valid
        # 20-term tail, i.e. independent of which prefix it extends
        incs = sample_increments(RngStream(3), 2, 0.1)
        small = kpw_iterated_integrals(RngStream(3), incs, 0.1, n=20)
        large = kpw_iterated_integrals(RngStream(3), incs, 0.1, n=40)
        again = kpw_iterated_integrals(RngStream(3), incs, 0.1, n=20)
        assert np.array_equal(small.matrix, again.matrix)
        tail = large.matrix - small.matrix
        assert np.allclose(tail, -tail.T, atol=1e-14)
        assert not np.allclose(tail, 0.0)

    def test_batch_matches_truncated_law(self):
        # Monte Carlo, CRN across truncations via a common stream
        h, size = 0.01, 30_000
        variances = []
        for n in (1, 10, 100, 3000):
            _, jmat = kpw_batch(RngStream(77), m=2, h=h, n=n, size=size)
            variances.append(jmat[:, 0, 1].var())
        # nondecreasing in n and approaching h^2/2 from below (within noise)
        stderr = np.sqrt(8.0 / size) * h * h / 2.0
        for lo, hi in zip(variances, variances[1:]):
            assert hi >= lo - 3.0 * stderr
        for v, n in zip(variances, (1, 10, 100, 3000)):
            assert abs(v - truncated_offdiag_variance(h, n)) < 4.0 * stderr
        assert variances[-1] <= h * h / 2.0 + 3.0 * stderr

    def test_batch_mean_is_zero(self):
        # E[J(l, i)] = 0 for all entries, diagonal included
        h, size = 0.01, 30_000
        _, jmat = kpw_batch(RngStream(78), m=2, h=h, n=50, size=size)
        for l in range(2):
            for i in range(2):
                se = jmat[:, l, i].std() / np.sqrt(size)
                assert abs(jmat[:, l, i].mean()) <= 4.0 * se

    def test_batch_m1_has_exact_diagonal(self):
        incs, jmat = kpw_batch(RngStream(5), m=1, h=0.2, n=10, size=100)
        assert np.array_equal(jmat[:, 0, 0], (incs[:, 0] ** 2 - 0.2) / 2.0)


class TestDoubleTimeIntegral:
    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            double_time_integral_sample(RngStream(1), 2, 0.0)

    def test_deterministic(self):
        s = RngStream(9, step=2)
        assert np.array_equal(double_time_integral_sample(s, 3, 0.5),
                              double_time_integral_sample(s, 3, 0.5))

    def test_variance_is_t_cubed_over_three(self):
        z = double_time_integral_sample(RngStream(13), 1, 1.0, size=1_000_000)
        assert abs(z.var() - 1.0 / 3.0) < 0.01 * (1.0 / 3.0)

    def test_joint_covariance_with_endpoint(self):
        # Cov(B_t, Z_t) = t^2 / 2 per coordinate
        t = 0.7
        endpoint, integral = brownian_with_time_integral(RngStream(14), 1, t, size=500_000)
        cov = float(np.mean(endpoint * integral))
        target = t * t / 2.0
        stderr = float(np.std(endpoint * integral)) / np.sqrt(endpoint.shape[0])
        assert abs(cov - target) < 4.0 * stderr
        assert abs(endpoint.var() - t) < 0.01 * t * 2
