import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_channels
from rsma_linklab.errors import DegenerateInputError, DomainError, SingularChannelError
from rsma_linklab.precoding import (
    assemble,
    common_direction,
    inner,
    mrt_directions,
    normalized_channels,
    zf_directions,
)


def span_grid_max_min(h, n_angle=721, n_phase=720):
    """Brute-force max-min normalized gain over unit vectors in span{h1, h2}."""
    hbar = normalized_channels(h)
    a = np.linspace(0, np.pi / 2, n_angle)[:, None]
    phi = np.linspace(0, 2 * np.pi, n_phase, endpoint=False)[None, :]
    p = np.cos(a)[..., None] * hbar[0] + (np.sin(a) * np.exp(1j * phi))[..., None] * hbar[1]
    p /= np.linalg.norm(p, axis=-1, keepdims=True)
    g = np.abs(np.einsum("ki,abi->abk", hbar.conj(), p)) ** 2
    return np.max(np.min(g, axis=-1))


class TestZeroForcing:
    @pytest.mark.parametrize("k,nt", [(1, 4), (2, 4), (3, 4), (4, 4), (2, 2)])
    def test_orthogonal_and_unit(self, rng, k, nt):
        h = random_channels(rng, k, nt, size=50)
        p = zf_directions(h)
        np.testing.assert_allclose(np.linalg.norm(p, axis=-1), 1, atol=1e-12)
        g = np.abs(np.conj(h) @ np.swapaxes(p, -1, -2))
        off = g * (1 - np.eye(k))
        assert np.max(off) < 1e-10
        assert np.min(np.diagonal(g, axis1=-2, axis2=-1)) > 0

    def test_singular(self):
        h = np.array([[1, 1j, 0, 0], [2, 2j, 0, 0]], dtype=complex)
        with pytest.raises(SingularChannelError):
            zf_directions(h)

    def test_zero_channel(self):
        with pytest.raises(DegenerateInputError):
            zf_directions(np.zeros((2, 4), dtype=complex))

    def test_scale_invariant(self, rng):
        h = random_channels(rng, 3, 4)
        scale = np.array([0.1, 7.0, 2.5j])[:, None]
        np.testing.assert_allclose(
            np.abs(zf_directions(h) @ zf_directions(h).conj().T),
            np.abs(zf_directions(h * scale) @ zf_directions(h).conj().T),
            atol=1e-10,
        )


class TestCommonDirection:
    def test_two_users_equal_gains(self, rng):
        h = random_channels(rng, 2, 4, size=100)
        pc = common_direction(h)
        hbar = normalized_channels(h)
        g = np.abs(inner(hbar, pc[:, None, :])) ** 2
        rho = np.abs(inner(hbar[:, 0], hbar[:, 1]))
        np.testing.assert_allclose(g[:, 0], g[:, 1], atol=1e-12)
        np.testing.assert_allclose(g[:, 0], (1 + rho) / 2, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(pc, axis=-1), 1, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_two_users_beats_span_grid(self, seed):
        h = random_channels(np.random.default_rng(seed), 2, 4)
        pc = common_direction(h)
        g = np.min(np.abs(inner(normalized_channels(h), pc)) ** 2)
        best = span_grid_max_min(h)
        assert g >= best - 1e-9
        assert g - best < 1e-4

    def test_collinear_fallback(self):
        h1 = np.array([1, 1j, -1, 0.5], dtype=complex)
        pc = common_direction(np.stack([h1, 3j * h1]))
        np.testing.assert_allclose(pc, h1 / np.linalg.norm(h1))

    def test_orthogonal_users(self):
        h = np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=complex)
        pc = common_direction(h)
        np.testing.assert_allclose(np.abs(pc[:2]) ** 2, [0.5, 0.5], atol=1e-12)

    def test_single_user(self, rng):
        h = random_channels(rng, 1, 4)
        np.testing.assert_allclose(common_direction(h), normalized_channels(h)[0])

    def test_three_users_dominant_singular(self, rng):
        h = random_channels(rng, 3, 4)
        hbar = normalized_channels(h)
        pc = common_direction(h)
        u = np.linalg.svd(hbar.T)[0][:, 0]
        assert abs(abs(np.vdot(u, pc)) - 1) < 1e-10
        # maximizes the total normalized gain
        total = np.sum(np.abs(hbar.conj() @ pc) ** 2)
        probes = rng.normal(size=(500, 4)) + 1j * rng.normal(size=(500, 4))
        probes /= np.linalg.norm(probes, axis=-1, keepdims=True)
        assert total >= np.max(np.sum(np.abs(probes @ hbar.T.conj()) ** 2, axis=-1)) - 1e-12

    @given(st.floats(0.01, 100), st.floats(0, 2 * np.pi))
    def test_channel_scaling_invariant(self, scale, phase):
        h = random_channels(np.random.default_rng(3), 2, 4)
        pc = common_direction(h)
        pc2 = common_direction(h * scale * np.exp(1j * phase))
        assert abs(abs(np.vdot(pc, pc2)) - 1) < 1e-9


class TestMrt:
    def test_matches_normalized(self, rng):
        h = random_channels(rng, 3, 4, size=4)
        np.testing.assert_allclose(mrt_directions(h), h / np.linalg.norm(h, axis=-1, keepdims=True))


class TestAssemble:
    @pytest.mark.parametrize("t", [0.0, 0.3, 1.0])
    def test_total_power(self, rng, t):
        h = random_channels(rng, 2, 4)
        pre = assemble(common_direction(h), zf_directions(h), t, 10.0)
        power = np.linalg.norm(pre.common) ** 2 + np.sum(np.linalg.norm(pre.private, axis=-1) ** 2)
        assert power == pytest.approx(10.0)
        assert np.linalg.norm(pre.common) ** 2 == pytest.approx(10.0 * t)

    def test_gains(self, rng):
        h = random_channels(rng, 2, 4)
        pre = assemble(common_direction(h), zf_directions(h), 0.4, 5.0)
        gc, g = pre.gains(h)
        for k in range(2):
            assert gc[k] == pytest.approx(np.vdot(h[k], pre.common))
            for j in range(2):
                assert g[k, j] == pytest.approx(np.vdot(h[k], pre.private[j]))

    def test_batched(self, rng):
        h = random_channels(rng, 2, 4, size=6)
        t = np.linspace(0, 1, 6)
        pre = assemble(common_direction(h), zf_directions(h), t, np.full(6, 2.0))
        np.testing.assert_allclose(np.linalg.norm(pre.common, axis=-1) ** 2, 2 * t)

    @pytest.mark.parametrize("t,p", [(-0.1, 1.0), (1.1, 1.0), (np.nan, 1.0), (0.5, 0.0)])
    def test_domain(self, rng, t, p):
        h = random_channels(rng, 2, 4)
        with pytest.raises(DomainError):
            assemble(common_direction(h), zf_directions(h), t, p)

    def test_non_unit(self, rng):
        h = random_channels(rng, 2, 4)
        with pytest.raises(DomainError):
            assemble(2 * common_direction(h), zf_directions(h), 0.5, 1.0)
