"""Small dense linear algebra, quadrature and seeded sampling helpers.

Everything here is pure. Random draws go through :class:`SeededRng`, a
counter-based (Philox) generator keyed by ``(seed, stream)`` so that any
partition of Monte Carlo trials over workers reproduces the same numbers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate

from .errors import AccuracyError, DegenerateInputError, PreconditionError

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class SeededRng:
    """Key for an independent, reproducible random stream.

    Two instances with equal ``(seed, stream)`` always produce identical
    draw sequences; :meth:`generator` returns a fresh generator positioned
    at the start of the stream.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream < 2**64):
            raise PreconditionError("seed and stream must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, stream: int) -> "SeededRng":
        return SeededRng(self.seed, stream)


RngLike = Union[SeededRng, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, SeededRng):
        return rng.generator()
    return rng


def _check_hermitian(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise PreconditionError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise PreconditionError("matrix has non-finite entries")
    asym = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if asym > HERMITIAN_TOL:
        raise PreconditionError(f"matrix is not Hermitian (max asymmetry {asym:.3g})")
    return m


def hermitian_eigendecomposition(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a Hermitian matrix.

    Returns:
        ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in descending
        order and eigenvectors as the matching orthonormal columns, so that
        ``m == V @ diag(lam) @ V^H``.
    """
    m = _check_hermitian(m)
    # symmetrize away the sub-tolerance asymmetry before handing to LAPACK
    lam, vec = np.linalg.eigh(0.5 * (m + m.conj().T))
    order = np.argsort(lam)[::-1]
    return lam[order], vec[:, order]


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate ``v`` (last axis) so its first non-negligible entry is real positive."""
    mag = np.abs(v)
    thresh = 1e-12 * np.max(mag, axis=-1, keepdims=True)
    first = np.argmax(mag > thresh, axis=-1)
    ref = np.take_along_axis(v, first[..., None], axis=-1)
    return v * (np.conj(ref) / np.abs(ref))


def dominant_left_singular_vector(m: np.ndarray) -> np.ndarray:
    """Unit vector ``v`` maximizing ``||m^H v||``.

    Works on stacks of matrices (leading batch axes). The global phase is
    fixed so that the first non-negligible entry is real and positive.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim < 2:
        raise PreconditionError("expected a matrix")
    if np.any(np.max(np.abs(m), axis=(-2, -1)) == 0):
        raise DegenerateInputError("dominant singular vector of an all-zero matrix")
    u, _, _ = np.linalg.svd(m)
    return _fix_phase(u[..., :, 0])


def integrate_1d(
    f: Callable[[float], complex],
    lower: float,
    upper: float,
    tol: float = 1e-9,
    max_subdivisions: int = 200,
) -> complex:
    """Adaptive quadrature of a complex-valued function on ``[lower, upper]``.

    Real and imaginary parts are integrated separately with QUADPACK; each is
    held to an absolute error of ``tol / 2``.

    Raises:
        AccuracyError: if either part fails to converge. The partial result
            is available as ``err.estimate``.
    """
    if not lower < upper:
        raise PreconditionError("integration requires lower < upper")

    parts = []
    failed = []
    for part in (np.real, np.imag):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err, info, *rest = integrate.quad(
                lambda a: float(part(f(a))),
                lower,
                upper,
                epsabs=tol / 2,
                epsrel=0.0,
                limit=max_subdivisions,
                full_output=1,
            )
        parts.append(val)
        if rest or err > tol / 2 or not np.isfinite(val):
            failed.append(err)
    result = complex(parts[0], parts[1])
    if failed:
        raise AccuracyError(
            f"quadrature did not reach tol={tol:g} (error estimate {max(failed):.3g})",
            estimate=result,
        )
    return result


def sample_complex_gaussian(rng: RngLike, n, variance: float = 1.0) -> np.ndarray:
    """Draw i.i.d. circularly-symmetric complex Gaussian samples.

    Args:
        rng: a :class:`SeededRng` (a fresh stream is started) or a live
            ``numpy.random.Generator`` (draws continue from its state).
        n: sample count or output shape.
        variance: ``E|z|^2`` per sample.
    """
    if not variance > 0:
        raise PreconditionError("variance must be positive")
    gen = as_generator(rng)
    shape = (n,) if np.isscalar(n) else tuple(n)
    z = gen.standard_normal(shape + (2,))
    return np.sqrt(variance / 2) * (z[..., 0] + 1j * z[..., 1])
