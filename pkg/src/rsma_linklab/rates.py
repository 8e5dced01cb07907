"""Achievable rates and power-split policies.

Two families of metrics are implemented:

* the Gaussian-signalling sum-rate with ZF private directions, whose
  maximizer over the common-stream power fraction ``t`` has a closed form;
* constellation-constrained (CC) rates, i.e. mutual information with
  finite, uniformly used alphabets, in their exact Monte Carlo form and in
  the deterministic Jensen approximation used for fast allocation.

Noise is ``CN(0, noise_var)``; with ``noise_var = 1`` the SNR equals
``p_total``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ContractViolation, PreconditionError
from .numerics import RngLike, as_generator, sample_complex_gaussian
from .precoding import PrecoderSet, inner, normalized_channels

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
ZF_LEAKAGE_TOL = 1e-6
DEFAULT_T_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
OBJECTIVES = ("gaussian", "cc-sic", "cc-nonsic")


def unit_gains(h: np.ndarray, common_dir: np.ndarray, private_dirs: np.ndarray):
    """``(h_k^H pc_bar, h_k^H pk_bar)`` per user, each of shape ``(..., K)``."""
    h = np.asarray(h, dtype=complex)
    c = inner(h, np.asarray(common_dir)[..., None, :])
    d = inner(h, private_dirs)
    return c, d


def check_zero_forcing(h: np.ndarray, private_dirs: np.ndarray, tol: float = ZF_LEAKAGE_TOL):
    """Raise unless ``|hbar_i^H pbar_k| <= tol`` for every ``i != k``."""
    hbar = normalized_channels(h)
    cross = np.abs(np.conj(hbar) @ np.swapaxes(private_dirs, -1, -2))
    k = cross.shape[-1]
    off = cross * (1 - np.eye(k))
    worst = float(np.max(off)) if off.size else 0.0
    if worst > tol:
        raise ContractViolation(f"private directions are not zero-forcing (leakage {worst:.3g})")


# ---------------------------------------------------------------------------
# Gaussian signalling


def _weakest_from_unit_gains(c: np.ndarray, d: np.ndarray) -> np.ndarray:
    ratio = np.abs(c) ** 2 / (np.abs(d) ** 2 + 1)
    lowest = np.min(ratio, axis=-1, keepdims=True)
    # near-equal ratios count as ties and go to the smaller index
    tie = ratio <= lowest * (1 + 1e-12) + 1e-300
    return np.argmax(tie, axis=-1)


def weakest_user(h: np.ndarray, precoders: PrecoderSet) -> np.ndarray:
    """Index ``k'`` minimizing ``|h_k^H pc_bar|^2 / (|h_k^H pk_bar|^2 + 1)``.

    The ratio does not depend on ``t``, so ``k'`` is fixed before the power
    split is chosen. Ties go to the smaller index.
    """
    c, d = unit_gains(h, precoders.common_dir, precoders.private_dirs)
    out = _weakest_from_unit_gains(c, d)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GaussianAllocationTerms:
    """Per-realization constants of the Gaussian sum-rate as a function of t.

    ``a[k] = (P/K) |h_k^H pk_bar|^2``,
    ``b = P |h_k'^H pc_bar|^2 - a[k']`` and ``k_prime`` the weakest user.
    """

    a: np.ndarray
    b: np.ndarray
    k_prime: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.a) < 0):
            raise PreconditionError("a_k must be non-negative")


def terms_from_unit_gains(c: np.ndarray, d: np.ndarray, p_total) -> GaussianAllocationTerms:
    k = c.shape[-1]
    p = np.asarray(p_total, dtype=float)[..., None]
    a = p / k * np.abs(d) ** 2
    kp = _weakest_from_unit_gains(c, d)
    c_kp = np.take_along_axis(c, kp[..., None], axis=-1)[..., 0]
    a_kp = np.take_along_axis(a, kp[..., None], axis=-1)[..., 0]
    b = p[..., 0] * np.abs(c_kp) ** 2 - a_kp
    return GaussianAllocationTerms(a=a, b=b, k_prime=kp)


def allocation_terms(h: np.ndarray, precoders: PrecoderSet) -> GaussianAllocationTerms:
    c, d = unit_gains(h, precoders.common_dir, precoders.private_dirs)
    return terms_from_unit_gains(c, d, precoders.p_total)


def _split(terms: GaussianAllocationTerms):
    a = np.asarray(terms.a, dtype=float)
    kp = np.asarray(terms.k_prime)
    a_kp = np.take_along_axis(a, kp[..., None], axis=-1)[..., 0]
    others = np.ones(a.shape, dtype=bool)
    np.put_along_axis(others, kp[..., None], False, axis=-1)
    return a, a_kp, np.asarray(terms.b, dtype=float), others


def sum_rate_from_terms(terms: GaussianAllocationTerms, t) -> np.ndarray:
    """Gaussian sum-rate in bits/symbol; ``t`` broadcasts against the batch.

    ``log2(1 + a_k' + t b) + sum_{i != k'} log2(1 + (1 - t) a_i)``.
    """
    a, a_kp, b, others = _split(terms)
    t = np.asarray(t, dtype=float)
    common = np.log2(1 + a_kp + t * b)
    private = np.sum(np.where(others, np.log2(1 + (1 - t)[..., None] * a), 0.0), axis=-1)
    return common + private


def sum_rate_derivative(terms: GaussianAllocationTerms, t) -> np.ndarray:
    """d/dt of the sum-rate in nats (sign is all that matters)."""
    a, a_kp, b, others = _split(terms)
    t = np.asarray(t, dtype=float)
    private = np.sum(np.where(others, a / (1 + (1 - t)[..., None] * a), 0.0), axis=-1)
    return b / (1 + a_kp + t * b) - private


def stationarity_polynomial(terms: GaussianAllocationTerms, t) -> np.ndarray:
    """Numerator of :func:`sum_rate_derivative` cleared of denominators.

    ``b prod_{i!=k'} (1 + (1-t) a_i) - (1 + a_k' + t b) sum_{i!=k'} a_i prod_{j!=i,k'} (1 + (1-t) a_j)``.
    Its unique root in ``(0, 1)`` is the interior optimum.
    """
    a, a_kp, b, others = _split(terms)
    t = np.asarray(t, dtype=float)
    f = np.where(others, 1 + (1 - t)[..., None] * a, 1.0)
    full = np.prod(f, axis=-1)
    k = a.shape[-1]
    acc = np.zeros(np.broadcast(full, a_kp).shape)
    for i in range(k):
        rest = np.prod(np.delete(f, i, axis=-1), axis=-1)
        acc = acc + np.where(others[..., i], a[..., i] * rest, 0.0)
    return b * full - (1 + a_kp + t * b) * acc


def closed_form_t_star(terms: GaussianAllocationTerms, tol: float = 1e-12) -> np.ndarray:
    """Maximizer of the (concave) Gaussian sum-rate over ``t in [0, 1]``.

    Returns 0 when the derivative at 0 is non-positive, 1 when the derivative
    at 1 is non-negative, and otherwise the interior stationary point located
    by bisection on the derivative sign.
    """
    d0 = sum_rate_derivative(terms, 0.0)
    d1 = sum_rate_derivative(terms, 1.0)
    interior = (d0 > 0) & (d1 < 0)
    lo = np.zeros(d0.shape)
    hi = np.ones(d0.shape)
    n_steps = int(math.ceil(math.log2(1 / tol))) + 1
    for _ in range(n_steps):
        mid = 0.5 * (lo + hi)
        pos = sum_rate_derivative(terms, mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    t0 = 0.5 * (lo + hi)
    if np.any(interior & ~np.isfinite(t0)):
        raise ArithmeticError("no interior stationary point found")
    t = np.where(d0 <= 0, 0.0, np.where(d1 >= 0, 1.0, t0))
    return float(t) if t.ndim == 0 else t


def gaussian_sum_rate(h: np.ndarray, precoders: PrecoderSet, t=None) -> np.ndarray:
    """Gaussian-signalling RSMA sum-rate with ZF private directions.

    ``t`` defaults to ``precoders.t``; an explicit array evaluates a grid.

    Raises:
        ContractViolation: if the private directions leak across users.
    """
    check_zero_forcing(h, precoders.private_dirs)
    t = precoders.t if t is None else t
    if np.all(np.asarray(precoders.p_total) == 0):
        return np.zeros(np.shape(t))
    out = sum_rate_from_terms(allocation_terms(h, precoders), t)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Constellation-constrained entropies


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    stderr: float


def _pairwise_diff(points: np.ndarray) -> np.ndarray:
    return points[..., :, None] - points[..., None, :]


def _entropy_samples(points: np.ndarray, noise_var: float, noise: np.ndarray) -> np.ndarray:
    """Per-noise-sample values whose mean is ``H(s | y)`` in bits."""
    diff = _pairwise_diff(points)
    d2 = np.abs(diff) ** 2
    m = points.shape[-1]
    chunk = max(1, 4_000_000 // max(m * m, 1))
    out = np.empty(noise.shape[0])
    for start in range(0, noise.shape[0], chunk):
        n = noise[start : start + chunk]
        # |d + n|^2 - |n|^2 = |d|^2 + 2 Re(d conj(n))
        expo = -(d2[..., None] + 2 * np.real(diff[..., None] * np.conj(n))) / noise_var
        lse = logsumexp(expo, axis=1)  # over l, shape (M, S)
        out[start : start + chunk] = np.mean(lse, axis=0) / LN2
    return out


def cc_entropy_exact(points, noise_var: float, rng: RngLike, n_noise: int = 10_000) -> EntropyEstimate:
    """Monte Carlo estimate of ``H(s | y)`` for ``y = s + n`` with ``s`` uniform on ``points``."""
    points = np.asarray(points, dtype=complex).ravel()
    if points.size < 1:
        raise PreconditionError("need at least one point")
    if not noise_var > 0:
        raise PreconditionError("noise variance must be positive")
    noise = sample_complex_gaussian(as_generator(rng), n_noise, noise_var)
    samples = _entropy_samples(points, noise_var, noise)
    se = float(np.std(samples, ddof=1) / math.sqrt(n_noise)) if n_noise > 1 else float("inf")
    return EntropyEstimate(float(np.mean(samples)), se)


def cc_entropy_approx(points, noise_var) -> np.ndarray:
    """Jensen approximation of ``H(s | y)``, broadcasting over leading axes.

    ``(1/M) sum_m log2 sum_l exp(-|z_m - z_l|^2 / (2 noise_var))``, clamped
    to ``[0, log2 M]``.
    """
    points = np.asarray(points, dtype=complex)
    m = points.shape[-1]
    if m < 1:
        raise PreconditionError("need at least one point")
    nv = np.asarray(noise_var, dtype=float)
    if np.any(nv <= 0):
        raise PreconditionError("noise variance must be positive")
    d2 = np.abs(_pairwise_diff(points)) ** 2
    lse = logsumexp(-d2 / (2 * nv[..., None, None]), axis=-1)
    h = np.mean(lse, axis=-1) / LN2
    h = np.clip(h, 0.0, math.log2(m))
    return float(h) if h.ndim == 0 else h


# ---------------------------------------------------------------------------
# Constellation-constrained rates


def _superpose(gc, gp, xc, xk):
    """Points ``gc*x + gp*u`` over ``x in xc, u in xk`` (flattened last axis)."""
    gc = np.asarray(gc)[..., None, None]
    gp = np.asarray(gp)[..., None, None]
    pts = gc * xc[:, None] + gp * xk[None, :]
    return pts.reshape(pts.shape[:-2] + (xc.size * xk.size,))


def _rates_from_entropies(hj, hp, hc, mc: int, mk: int):
    lc, lk = math.log2(mc), math.log2(mk)
    raw_c = lc - hj + hp
    raw_sic = lk - hp
    raw_non = lk - hj + hc
    for name, raw in (("common", raw_c), ("private", raw_sic), ("private non-SIC", raw_non)):
        if np.any(raw < -1e-9):
            log.debug("clamping negative %s CC rate (min %.3g)", name, float(np.min(raw)))
    return (
        np.clip(raw_c, 0.0, lc),
        np.clip(raw_sic, 0.0, lk),
        np.clip(raw_non, 0.0, lk),
    )


def cc_rate_terms_approx(gc, gp, xc, xk, noise_var=1.0):
    """Per-user approximate CC rates from effective gains.

    Args:
        gc: ``h_k^H p_c`` per user, shape ``(..., K)``.
        gp: ``h_k^H p_k`` per user, shape ``(..., K)``.
        xc, xk: common and private constellation points.

    Returns:
        ``(common, private_sic, private_non_sic)``, each ``(..., K)``.
    """
    xc = np.asarray(xc, dtype=complex)
    xk = np.asarray(xk, dtype=complex)
    gc = np.asarray(gc, dtype=complex)
    gp = np.asarray(gp, dtype=complex)
    nv = np.broadcast_to(np.asarray(noise_var, dtype=float), gc.shape[:-1])[..., None]
    hj = cc_entropy_approx(_superpose(gc, gp, xc, xk), nv)
    hp = cc_entropy_approx(gp[..., None] * xk, nv)
    hc = cc_entropy_approx(gc[..., None] * xc, nv)
    return _rates_from_entropies(hj, hp, hc, xc.size, xk.size)


def cc_sum_rates_approx(gc, gp, xc, xk, noise_var=1.0):
    """``(sum_sic, sum_non_sic)`` with the common rate taken as the min over users."""
    common, sic, non = cc_rate_terms_approx(gc, gp, xc, xk, noise_var)
    rc = np.min(common, axis=-1)
    return rc + np.sum(sic, axis=-1), rc + np.sum(non, axis=-1)


@dataclass(frozen=True)
class CcRateReport:
    common_rate: float
    private_rates: np.ndarray
    sum: float
    mode: str
    method: str
    common_rates: np.ndarray = field(default=None)
    stderr: float = 0.0


def _points(c) -> np.ndarray:
    return np.asarray(getattr(c, "points", c), dtype=complex).ravel()


def cc_sum_rate(
    h: np.ndarray,
    precoders: PrecoderSet,
    xc,
    xk,
    mode: str = "sic",
    method: str = "approx",
    rng: RngLike | None = None,
    n_noise: int = 10_000,
    noise_var: float = 1.0,
) -> CcRateReport:
    """CC sum-rate of one channel realization.

    The common rate is evaluated per user over the joint constellation
    ``xc x xk`` observed through ``[p_c, p_k]`` and the minimum over users is
    kept. Private rates either assume the common symbol is known (``sic``)
    or treat it as noise (``non-sic``).

    Args:
        xc, xk: :class:`~rsma_linklab.bicm.Constellation` objects or point arrays.
        method: ``"approx"`` (Jensen) or ``"exact"`` (Monte Carlo, needs ``rng``).
    """
    if mode not in ("sic", "non-sic"):
        raise PreconditionError(f"unknown mode {mode!r}")
    if method not in ("approx", "exact"):
        raise PreconditionError(f"unknown method {method!r}")
    h = np.asarray(h, dtype=complex)
    check_zero_forcing(h, precoders.private_dirs)
    xc_pts, xk_pts = _points(xc), _points(xk)
    g_c, g = precoders.gains(h)
    g_p = np.diagonal(g, axis1=-2, axis2=-1)

    stderr = 0.0
    if method == "approx":
        common, sic, non = cc_rate_terms_approx(g_c, g_p, xc_pts, xk_pts, noise_var)
    else:
        if rng is None:
            raise PreconditionError("exact CC rates need an rng")
        gen = as_generator(rng)
        k = g_p.shape[-1]
        hj, hp, hc = np.zeros(k), np.zeros(k), np.zeros(k)
        var = 0.0
        for user in range(k):
            # one noise draw per user, shared by all three entropies
            noise = sample_complex_gaussian(gen, n_noise, noise_var)
            ests = []
            for pts in (
                _superpose(g_c[user], g_p[user], xc_pts, xk_pts),
                g_p[user] * xk_pts,
                g_c[user] * xc_pts,
            ):
                s = _entropy_samples(np.asarray(pts), noise_var, noise)
                ests.append((float(np.mean(s)), float(np.std(s, ddof=1) / math.sqrt(n_noise))))
            (hj[user], sj), (hp[user], sp), (hc[user], sc) = ests
            var += sj**2 + sp**2 + (sc**2 if mode == "non-sic" else 0.0)
        common, sic, non = _rates_from_entropies(hj, hp, hc, xc_pts.size, xk_pts.size)
        stderr = math.sqrt(var)

    private = sic if mode == "sic" else non
    rc = float(np.min(common))
    return CcRateReport(
        common_rate=rc,
        private_rates=np.asarray(private),
        sum=rc + float(np.sum(private)),
        mode=mode,
        method=method,
        common_rates=np.asarray(common),
        stderr=stderr,
    )


def _sdma_point_sets(g: np.ndarray, pts: np.ndarray, user: int):
    """Received points of all streams and of the interferers only, seen by ``user``."""
    k = g.shape[-1]
    m = pts.size
    combos = np.array(np.meshgrid(*([np.arange(m)] * k), indexing="ij")).reshape(k, -1)
    row = g[..., user, :]
    all_pts = np.sum(row[..., :, None] * pts[combos], axis=-2)
    other_idx = [j for j in range(k) if j != user]
    if not other_idx:
        return all_pts, None
    sub = combos[other_idx][:, combos[user] == 0]
    oth_pts = np.sum(row[..., other_idx, None] * pts[sub], axis=-2)
    return all_pts, oth_pts


def sdma_cc_rates_approx(g: np.ndarray, xk, noise_var=1.0) -> np.ndarray:
    """Approximate CC rate per user for SDMA treating other streams as noise.

    ``g[..., k, j] = h_k^H p_j``. Interference is handled through its exact
    finite-alphabet distribution (joint de-mapping limit), not as Gaussian
    noise. Returns ``(..., K)`` rates.
    """
    g = np.asarray(g, dtype=complex)
    pts = np.asarray(_points(xk))
    lk = math.log2(pts.size)
    nv = np.broadcast_to(np.asarray(noise_var, dtype=float), g.shape[:-2])
    rates = []
    for user in range(g.shape[-1]):
        all_pts, oth_pts = _sdma_point_sets(g, pts, user)
        h_oth = 0.0 if oth_pts is None else cc_entropy_approx(oth_pts, nv)
        rates.append(np.clip(lk - cc_entropy_approx(all_pts, nv) + h_oth, 0.0, lk))
    return np.stack(rates, axis=-1)


def sdma_cc_rates_exact(g: np.ndarray, xk, rng: RngLike, n_noise: int = 10_000,
                        noise_var: float = 1.0) -> np.ndarray:
    """Monte Carlo counterpart of :func:`sdma_cc_rates_approx` for one realization ``(K, K)``."""
    g = np.asarray(g, dtype=complex)
    if g.ndim != 2:
        raise PreconditionError("exact SDMA rates take a single (K, K) gain matrix")
    gen = as_generator(rng)
    pts = np.asarray(_points(xk))
    lk = math.log2(pts.size)
    rates = np.zeros(g.shape[-1])
    for user in range(g.shape[-1]):
        noise = sample_complex_gaussian(gen, n_noise, noise_var)
        all_pts, oth_pts = _sdma_point_sets(g, pts, user)
        h_all = float(np.mean(_entropy_samples(all_pts, noise_var, noise)))
        h_oth = 0.0 if oth_pts is None else float(np.mean(_entropy_samples(oth_pts, noise_var, noise)))
        rates[user] = min(max(lk - h_all + h_oth, 0.0), lk)
    return rates


# ---------------------------------------------------------------------------
# Power allocation


def _grid(grid) -> np.ndarray:
    g = np.asarray(sorted(float(x) for x in grid))
    if g.size == 0 or g[0] < 0 or g[-1] > 1:
        raise PreconditionError("t grid must be nonempty and within [0, 1]")
    return g


def objective_on_grid(c, d, p_total, objective: str, grid, xc=None, xk=None, noise_var=1.0):
    """Objective values for each grid point, shape ``(len(grid),) + batch``.

    ``c``, ``d`` are the unit-direction gains from :func:`unit_gains`.
    """
    grid = _grid(grid)
    c = np.asarray(c, dtype=complex)
    d = np.asarray(d, dtype=complex)
    k = c.shape[-1]
    p = np.asarray(p_total, dtype=float)
    if objective == "gaussian":
        terms = terms_from_unit_gains(c, d, p / np.asarray(noise_var, dtype=float))
        return np.stack([sum_rate_from_terms(terms, np.broadcast_to(t, terms.b.shape)) for t in grid])
    if objective not in ("cc-sic", "cc-nonsic"):
        raise PreconditionError(f"unknown objective {objective!r}")
    xc, xk = _points(xc), _points(xk)
    vals = []
    for t in grid:
        gc = np.sqrt(p * t)[..., None] * c
        gp = np.sqrt(p * (1 - t) / k)[..., None] * d
        sic, non = cc_sum_rates_approx(gc, gp, xc, xk, noise_var)
        vals.append(sic if objective == "cc-sic" else non)
    return np.stack(vals)


def power_allocation_search(
    h: np.ndarray,
    common_dir: np.ndarray,
    private_dirs: np.ndarray,
    p_total,
    objective: str = "cc-sic",
    grid: Sequence[float] = DEFAULT_T_GRID,
    xc=None,
    xk=None,
    noise_var: float = 1.0,
):
    """Grid argmax of the chosen objective; ties go to the smaller ``t``.

    CC objectives use the Jensen-approximated sum-rates, phase shifts between
    streams are not optimized.
    """
    g = _grid(grid)
    c, d = unit_gains(h, common_dir, private_dirs)
    vals = objective_on_grid(c, d, p_total, objective, g, xc, xk, noise_var)
    best = g[np.argmax(vals, axis=0)]
    return float(best) if np.ndim(best) == 0 else best

