import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_channels
from rsma_linklab.bicm import constellation
from rsma_linklab.errors import ContractViolation, PreconditionError
from rsma_linklab.numerics import SeededRng
from rsma_linklab.precoding import assemble, common_direction, mrt_directions, zf_directions
from rsma_linklab.rates import (
    DEFAULT_T_GRID,
    GaussianAllocationTerms,
    allocation_terms,
    cc_entropy_approx,
    cc_entropy_exact,
    cc_sum_rate,
    cc_sum_rates_approx,
    closed_form_t_star,
    gaussian_sum_rate,
    objective_on_grid,
    power_allocation_search,
    sdma_cc_rates_approx,
    sdma_cc_rates_exact,
    stationarity_polynomial,
    sum_rate_from_terms,
    unit_gains,
    weakest_user,
)

QPSK = constellation("QPSK").points
QAM16 = constellation("16QAM").points


def rsma(h, t, p):
    return assemble(common_direction(h), zf_directions(h), t, p)


def direct_sum_rate(h, pre):
    """Common rate as the min over users plus the ZF private rates, term by term."""
    gc, g = pre.gains(h)
    k = g.shape[-1]
    sinr_c = [abs(gc[i]) ** 2 / (abs(g[i, i]) ** 2 + 1) for i in range(k)]
    return min(math.log2(1 + s) for s in sinr_c) + sum(math.log2(1 + abs(g[i, i]) ** 2) for i in range(k))


def posterior_entropy_oracle(points, noise_var, n, seed):
    """H(s|y) by simulating y = s + n and evaluating -log2 P(s|y) with Bayes' rule."""
    gen = np.random.default_rng(seed)
    m = len(points)
    idx = gen.integers(m, size=n)
    noise = math.sqrt(noise_var / 2) * (gen.standard_normal(n) + 1j * gen.standard_normal(n))
    y = points[idx] + noise
    total = 0.0
    for j in range(n):
        lik = np.exp(-np.abs(y[j] - points) ** 2 / noise_var)
        total += -math.log2(lik[idx[j]] / lik.sum())
    return total / n


class TestWeakestUser:
    def test_symmetric_tie(self):
        h = np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=complex)
        assert weakest_user(h, rsma(h, 0.5, 10.0)) == 0

    def test_zero_common_gain(self):
        h = np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=complex)
        pre = assemble(np.array([1, 0, 0, 0], dtype=complex), zf_directions(h), 0.5, 1.0)
        assert weakest_user(h, pre) == 1

    def test_matches_direct_ratio(self, rng):
        for _ in range(20):
            h = random_channels(rng, 3, 4)
            pre = rsma(h, 0.5, 10.0)
            ratio = [abs(np.vdot(h[k], pre.common_dir)) ** 2 / (abs(np.vdot(h[k], pre.private_dirs[k])) ** 2 + 1)
                     for k in range(3)]
            assert weakest_user(h, pre) == int(np.argmin(ratio))


class TestGaussianSumRate:
    def test_t_zero_is_sdma(self, rng):
        h = random_channels(rng, 2, 4)
        pre = rsma(h, 0.0, 10.0)
        p = zf_directions(h)
        expected = sum(math.log2(1 + 10.0 / 2 * abs(np.vdot(h[k], p[k])) ** 2) for k in range(2))
        assert gaussian_sum_rate(h, pre) == pytest.approx(expected, abs=1e-12)

    def test_non_zf_rejected(self, rng):
        h = random_channels(rng, 2, 4)
        pre = assemble(common_direction(h), mrt_directions(h), 0.5, 1.0)
        with pytest.raises(ContractViolation):
            gaussian_sum_rate(h, pre)

    @pytest.mark.parametrize("k", [2, 3])
    def test_direct_formula(self, rng, k):
        for _ in range(50):
            h = random_channels(rng, k, 4)
            for t in (0.1, 0.5, 0.9):
                pre = rsma(h, t, 10.0)
                direct = direct_sum_rate(h, pre)
                value = gaussian_sum_rate(h, pre)
                # the closed expression keeps k' fixed, so it upper-bounds the min form
                assert value >= direct - 1e-12
                gc, g = pre.gains(h)
                sinr = [abs(gc[i]) ** 2 / (abs(g[i, i]) ** 2 + 1) for i in range(k)]
                if int(np.argmin(sinr)) == weakest_user(h, pre):
                    assert value == pytest.approx(direct, abs=1e-12)

    def test_equal_gain_exact(self):
        # orthogonal equal-norm users: common gains and private gains coincide
        h = np.array([[1, 0, 0, 0], [0, 1j, 0, 0]], dtype=complex)
        pre = rsma(h, 0.5, 10.0)
        assert gaussian_sum_rate(h, pre) == pytest.approx(direct_sum_rate(h, pre), abs=1e-12)

    def test_concave(self, rng):
        t = np.linspace(0, 1, 101)
        for _ in range(100):
            h = random_channels(rng, 2, 4)
            r = gaussian_sum_rate(h, rsma(h, 0.0, 100.0), t)
            assert np.max(r[2:] - 2 * r[1:-1] + r[:-2]) <= 1e-9


class TestClosedForm:
    def test_zero_branch(self):
        terms = GaussianAllocationTerms(a=np.array([5.0, 5.0]), b=np.array(-1.0), k_prime=np.array(0))
        assert closed_form_t_star(terms) == 0.0

    def test_one_branch(self):
        terms = GaussianAllocationTerms(a=np.array([0.01, 0.01]), b=np.array(50.0), k_prime=np.array(0))
        assert closed_form_t_star(terms) == 1.0

    @pytest.mark.parametrize("k", [2, 3])
    def test_matches_dense_grid(self, rng, k):
        grid = np.linspace(0, 1, 100_001)
        for _ in range(20):
            h = random_channels(rng, k, 4)
            terms = allocation_terms(h, rsma(h, 0.0, 10 ** rng.uniform(0, 3)))
            t = closed_form_t_star(terms)
            best = np.max(sum_rate_from_terms(terms, grid))
            assert sum_rate_from_terms(terms, t) >= best - 1e-9

    def test_interior_root_of_polynomial(self, rng):
        found = 0
        for _ in range(50):
            h = random_channels(rng, 3, 4)
            terms = allocation_terms(h, rsma(h, 0.0, 100.0))
            t = closed_form_t_star(terms)
            if 0 < t < 1:
                found += 1
                scale = abs(stationarity_polynomial(terms, 0.0)) + abs(stationarity_polynomial(terms, 1.0))
                assert abs(stationarity_polynomial(terms, t)) <= 1e-9 * scale
        assert found > 0

    def test_batched(self, rng):
        h = random_channels(rng, 2, 4, size=7)
        terms = allocation_terms(h, rsma(h, np.zeros(7), np.full(7, 30.0)))
        ts = closed_form_t_star(terms)
        for i in range(7):
            single = allocation_terms(h[i], rsma(h[i], 0.0, 30.0))
            assert ts[i] == pytest.approx(closed_form_t_star(single), abs=1e-12)


class TestEntropies:
    def test_identical_points(self):
        pts = np.full(4, 0.3 + 0.1j)
        assert cc_entropy_exact(pts, 1.0, SeededRng(1), 1000).value == pytest.approx(2.0, abs=1e-12)
        assert cc_entropy_approx(pts, 1.0) == pytest.approx(2.0, abs=1e-12)

    def test_noiseless(self):
        pts = np.array([0, 1, 2, 3], dtype=complex)
        assert cc_entropy_exact(pts, 1e-8, SeededRng(1), 2000).value < 1e-3
        assert cc_entropy_approx(pts, 1e-8) < 1e-3

    def test_approx_limits(self):
        assert cc_entropy_approx(QPSK, 1e12) == pytest.approx(2.0, abs=1e-6)
        assert cc_entropy_approx(np.array([1j]), 1.0) == 0.0

    def test_exact_against_posterior_oracle(self):
        est = cc_entropy_exact(QPSK, 1.0, SeededRng(5), 20_000)
        oracle = posterior_entropy_oracle(QPSK, 1.0, 20_000, 9)
        assert abs(est.value - oracle) < 0.03

    def test_exact_seed_agreement(self):
        a = cc_entropy_exact(QPSK, 1.0, SeededRng(1), 100_000)
        b = cc_entropy_exact(QPSK, 1.0, SeededRng(2), 100_000)
        assert a.stderr < 0.01
        assert abs(a.value - b.value) < 3 * math.hypot(a.stderr, b.stderr)

    def test_approx_close_to_exact(self):
        exact = cc_entropy_exact(QPSK, 1.0, SeededRng(3), 100_000).value
        assert abs(cc_entropy_approx(QPSK, 1.0) - exact) < 0.2

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            cc_entropy_exact(QPSK, 0.0, SeededRng(1))
        with pytest.raises(PreconditionError):
            cc_entropy_approx(QPSK, -1.0)
        with pytest.raises(PreconditionError):
            cc_entropy_exact(np.array([]), 1.0, SeededRng(1))


class TestCcSumRate:
    def test_t_zero(self, rng):
        h = random_channels(rng, 2, 4)
        pre = rsma(h, 0.0, 10.0)
        sic = cc_sum_rate(h, pre, QPSK, QPSK, "sic")
        non = cc_sum_rate(h, pre, QPSK, QPSK, "non-sic")
        assert sic.common_rate == pytest.approx(0.0, abs=1e-12)
        assert sic.sum == pytest.approx(non.sum, abs=1e-12)

    def test_noiseless_six_bits(self, rng):
        h = random_channels(rng, 2, 4)
        r = cc_sum_rate(h, rsma(h, 0.5, 1.0), QPSK, QPSK, "sic", noise_var=1e-6)
        assert r.sum == pytest.approx(6.0, abs=1e-6)

    def test_report_invariants(self, rng):
        h = random_channels(rng, 2, 4)
        r = cc_sum_rate(h, rsma(h, 0.4, 10.0), QAM16, QPSK, "non-sic")
        assert 0 <= r.common_rate <= 4
        assert np.all((r.private_rates >= 0) & (r.private_rates <= 2))
        assert r.sum == pytest.approx(r.common_rate + r.private_rates.sum(), abs=1e-12)
        assert r.common_rate == pytest.approx(np.min(r.common_rates))

    def test_approx_tracks_exact(self, rng):
        # the deterministic form is biased upward at moderate SNR; both converge at the extremes
        h = random_channels(rng, 2, 4)
        for snr_db, tol in ((-10, 0.05), (10, 0.7), (40, 0.01)):
            pre = rsma(h, 0.5, 10 ** (snr_db / 10))
            for mode in ("sic", "non-sic"):
                a = cc_sum_rate(h, pre, QPSK, QPSK, mode)
                e = cc_sum_rate(h, pre, QPSK, QPSK, mode, method="exact", rng=SeededRng(4), n_noise=10_000)
                assert abs(a.sum - e.sum) < tol

    @pytest.mark.xfail(strict=True, reason="sum-rate bias of the deterministic form exceeds 0.2 bits at 10 dB")
    def test_approx_vs_exact_within_fifth_bit(self, rng):
        h = random_channels(rng, 2, 4)
        pre = rsma(h, 0.5, 10.0)
        for mode in ("sic", "non-sic"):
            a = cc_sum_rate(h, pre, QPSK, QPSK, mode)
            e = cc_sum_rate(h, pre, QPSK, QPSK, mode, method="exact", rng=SeededRng(4), n_noise=10_000)
            assert abs(a.sum - e.sum) < 0.2

    def test_exact_needs_rng(self, rng):
        h = random_channels(rng, 2, 4)
        with pytest.raises(PreconditionError):
            cc_sum_rate(h, rsma(h, 0.5, 1.0), QPSK, QPSK, method="exact")

    def test_single_point_common(self, rng):
        h = random_channels(rng, 2, 4)
        pre = rsma(h, 0.5, 10.0)
        one = np.array([1.0 + 0j])
        sic = cc_sum_rate(h, pre, one, QPSK, "sic", method="exact", rng=SeededRng(6), n_noise=20_000)
        non = cc_sum_rate(h, pre, one, QPSK, "non-sic", method="exact", rng=SeededRng(6), n_noise=20_000)
        assert abs(sic.sum - non.sum) <= 3 * math.hypot(sic.stderr, non.stderr) + 1e-12

    @settings(max_examples=30)
    @given(st.integers(0, 10_000), st.floats(0, 1), st.floats(-10, 30))
    def test_sic_dominates(self, seed, t, snr_db):
        h = random_channels(np.random.default_rng(seed), 2, 4)
        pre = rsma(h, t, 10 ** (snr_db / 10))
        sic = cc_sum_rate(h, pre, QAM16, QPSK, "sic")
        non = cc_sum_rate(h, pre, QAM16, QPSK, "non-sic")
        # equality cases (t = 0) differ only by summation rounding
        assert np.all(sic.private_rates >= non.private_rates - 1e-12)
        assert sic.sum >= non.sum - 1e-12

    def test_monotone_in_power(self, rng):
        h = random_channels(rng, 2, 4)
        for t in (0.2, 0.6):
            prev = None
            for snr in range(-10, 31, 5):
                sic, non = cc_sum_rates_approx(*(
                    lambda pre: (pre.gains(h)[0], np.diagonal(pre.gains(h)[1])))(rsma(h, t, 10 ** (snr / 10))),
                    QPSK, QPSK)
                if prev is not None:
                    assert sic >= prev[0] - 1e-6 and non >= prev[1] - 1e-6
                prev = (sic, non)


class TestSdmaRates:
    def test_zf_matches_single_stream(self, rng):
        h = random_channels(rng, 2, 4)
        p = np.sqrt(5.0) * zf_directions(h)
        g = np.conj(h) @ p.T
        rates = sdma_cc_rates_approx(g, QPSK)
        for k in range(2):
            expected = 2 - cc_entropy_approx(g[k, k] * QPSK, 1.0)
            assert rates[k] == pytest.approx(expected, abs=1e-9)

    def test_exact_close_to_approx(self, rng):
        h = random_channels(rng, 2, 4)
        g = np.conj(h) @ (np.sqrt(5.0) * mrt_directions(h)).T
        a = sdma_cc_rates_approx(g, QPSK)
        e = sdma_cc_rates_exact(g, QPSK, SeededRng(1), 20_000)
        assert np.max(np.abs(a - e)) < 0.2
        assert np.all((e >= 0) & (e <= 2))


class TestPowerAllocation:
    def test_single_candidate(self, rng):
        h = random_channels(rng, 2, 4)
        assert power_allocation_search(h, common_direction(h), zf_directions(h), 10.0, "cc-sic", [0.0],
                                       QPSK, QPSK) == 0.0

    def test_gaussian_dense_matches_closed_form(self, rng):
        grid = np.linspace(0, 1, 100_001)
        for _ in range(5):
            h = random_channels(rng, 2, 4)
            t_grid = power_allocation_search(h, common_direction(h), zf_directions(h), 100.0, "gaussian", grid)
            terms = allocation_terms(h, rsma(h, 0.0, 100.0))
            t_cf = closed_form_t_star(terms)
            assert sum_rate_from_terms(terms, t_grid) == pytest.approx(sum_rate_from_terms(terms, t_cf), abs=1e-9)

    def test_tie_goes_to_smaller_t(self):
        h = np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=complex)
        t = power_allocation_search(h, common_direction(h), zf_directions(h), 1e8, "cc-sic",
                                    DEFAULT_T_GRID, QPSK, QPSK)
        # at very high SNR every t > 0 saturates the CC sum-rate
        c, d = unit_gains(h, common_direction(h), zf_directions(h))
        vals = objective_on_grid(c, d, 1e8, "cc-sic", DEFAULT_T_GRID, QPSK, QPSK)
        assert t == DEFAULT_T_GRID[int(np.flatnonzero(vals == vals.max())[0])]

    @pytest.mark.parametrize("objective", ["cc-sic", "cc-nonsic"])
    def test_coarse_grid_sufficient(self, rng, objective):
        dense = np.linspace(0, 1, 101)
        h = random_channels(rng, 2, 4, size=30)
        c, d = unit_gains(h, common_direction(h), zf_directions(h))
        coarse = objective_on_grid(c, d, 10.0, objective, DEFAULT_T_GRID, QPSK, QPSK).max(axis=0)
        fine = objective_on_grid(c, d, 10.0, objective, dense, QPSK, QPSK).max(axis=0)
        assert coarse.mean() >= 0.98 * fine.mean()

    def test_bad_grid(self, rng):
        h = random_channels(rng, 2, 4)
        with pytest.raises(PreconditionError):
            power_allocation_search(h, common_direction(h), zf_directions(h), 1.0, "gaussian", [1.5])
        with pytest.raises(PreconditionError):
            power_allocation_search(h, common_direction(h), zf_directions(h), 1.0, "gaussian", [])
