"""Gaussian reference measures for loops and their classical counterpart.

The loop prior has diagonal covariance 1/(m q^2 + 1) in the Fourier basis, so
sampling is exact: independent normals scaled by sqrt of the eigenvalues.
m = inf is a first-class value; its spectrum is (1, 0, 0, ...), the sampler
then emits exactly constant loops and realizes the quasiclassical prior.  The
classical single-site reference is N(0, 1/beta).

Also here: the trace distance between the loop covariance and its
quasiclassical limit (partial sum, closed form, 1/m bound, tail estimates) and
the deterministic seed-stream derivation used by every chain in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .loops import ModeBasis, TemperatureLoop


def _check_mass(m: float) -> float:
    m = float(m)
    if math.isnan(m) or m <= 0.0:
        raise ValueError(f"mass must be positive (inf allowed), got {m}")
    return m


@dataclass(frozen=True)
class CovarianceSpectrum:
    """Eigenvalues 1/(m q^2 + 1) of the loop covariance on a ModeBasis."""

    basis: ModeBasis
    m: float

    def __post_init__(self):
        object.__setattr__(self, "m", _check_mass(self.m))

    @property
    def is_quasiclassical(self) -> bool:
        return math.isinf(self.m)

    @property
    def eigenvalues(self) -> np.ndarray:
        q = self.basis.abs_frequencies
        if self.is_quasiclassical:
            return np.where(q == 0.0, 1.0, 0.0)
        return 1.0 / (self.m * q * q + 1.0)

    @property
    def scales(self) -> np.ndarray:
        """Per-mode standard deviations sqrt(lambda_q)."""
        return np.sqrt(self.eigenvalues)

    def tail_mass(self, n_max: int | None = None) -> float:
        """Spectral mass beyond the basis truncation, sum_{n > n_max} 2/(m q_n^2 + 1)."""
        n_max = self.basis.n_max if n_max is None else n_max
        if self.is_quasiclassical:
            return 0.0
        return trace_distance(self.m, self.basis.beta) - trace_distance(
            self.m, self.basis.beta, n_max=n_max
        )


def characteristic_function(spectrum: CovarianceSpectrum, phi) -> float:
    """E[exp(i (phi, omega))] = exp(-(1/2) sum_q lambda_q phi_q^2) for the Gaussian prior."""
    if isinstance(phi, TemperatureLoop):
        if phi.basis != spectrum.basis:
            raise ValueError("test function basis mismatch")
        phi = phi.coeffs
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (spectrum.basis.n_modes,):
        raise ValueError("test function must be a coefficient vector on the same basis")
    return float(np.exp(-0.5 * np.sum(spectrum.eigenvalues * phi * phi)))


class GaussianSampler:
    """Exact sampler for the loop prior; bit-reproducible given a Generator."""

    def __init__(self, spectrum: CovarianceSpectrum, rng: np.random.Generator):
        self.spectrum = spectrum
        self.rng = rng
        self._scales = spectrum.scales

    def sample_coeffs(self, n_sites: int = 1) -> np.ndarray:
        """One configuration draw, shape (n_sites, n_modes)."""
        z = self.rng.standard_normal((n_sites, self.spectrum.basis.n_modes))
        return z * self._scales

    def sample_batch(self, n_draws: int, n_sites: int = 1) -> np.ndarray:
        z = self.rng.standard_normal((n_draws, n_sites, self.spectrum.basis.n_modes))
        return z * self._scales

    def sample_loop(self) -> TemperatureLoop:
        return TemperatureLoop(self.spectrum.basis, self.sample_coeffs(1)[0])


def classical_sigma(beta: float) -> float:
    """Standard deviation of the classical single-site reference N(0, 1/beta)."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return 1.0 / math.sqrt(beta)


def sample_classical(beta: float, rng: np.random.Generator, size=None) -> np.ndarray | float:
    """Draws from the classical single-site reference N(0, 1/beta)."""
    return rng.standard_normal(size) * classical_sigma(beta)


def stream_for(root_seed: int, task_index: int, chain_index: int = 0) -> np.random.Generator:
    """Deterministic per-(task, chain) random stream.

    Streams are derived by counter-based key splitting (SeedSequence spawn
    keys), so results never depend on worker scheduling: a task always sees the
    same stream no matter which process runs it, or when.
    """
    seq = np.random.SeedSequence(int(root_seed), spawn_key=(int(task_index), int(chain_index)))
    return np.random.default_rng(seq)


# ---------------------------------------------------------------------------
# Trace distance between the mass-m loop covariance and its m = inf limit.
# The spectrum difference is positive, so the trace norm is the plain sum
# 2 sum_{n>=1} 1/(m (2 pi n / beta)^2 + 1) per site.
# ---------------------------------------------------------------------------

_CHUNK = 1_000_000


def trace_distance(m: float, beta: float, n_sites: int = 1, n_max: int | None = None) -> float:
    """Trace-norm distance, closed form (n_max=None) or truncated sum.

    Closed form: n_sites * (x coth x - 1) with x = beta / (2 sqrt(m)).
    Truncated:   n_sites * 2 sum_{n=1..n_max} 1/(m (2 pi n / beta)^2 + 1).
    """
    m = _check_mass(m)
    if beta <= 0:
        raise ValueError("beta must be positive")
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    if math.isinf(m):
        return 0.0
    if n_max is None:
        x = beta / (2.0 * math.sqrt(m))
        return n_sites * (x / math.tanh(x) - 1.0)
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    alpha2 = m * (2.0 * math.pi / beta) ** 2
    total = 0.0
    for start in range(1, n_max + 1, _CHUNK):
        n = np.arange(start, min(start + _CHUNK, n_max + 1), dtype=float)
        total += float(np.sum(2.0 / (alpha2 * n * n + 1.0)))
    return n_sites * total


def trace_distance_bound(m: float, beta: float, n_sites: int = 1) -> float:
    """The 1/m bound: n_sites * beta^2 / (12 m)."""
    m = _check_mass(m)
    if beta <= 0:
        raise ValueError("beta must be positive")
    if math.isinf(m):
        return 0.0
    return n_sites * beta * beta / (12.0 * m)


def trace_tail_estimate(m: float, beta: float, n_max: int) -> float:
    """Midpoint integral estimate of the truncation tail sum_{n > n_max}.

    Integral of 2/(m (2 pi n / beta)^2 + 1) over (n_max + 1/2, inf); accurate
    to O(f''), far below the sum it estimates for any n_max used in practice.
    """
    m = _check_mass(m)
    if math.isinf(m):
        return 0.0
    alpha = 2.0 * math.pi * math.sqrt(m) / beta
    return (beta / (math.pi * math.sqrt(m))) * (math.pi / 2.0 - math.atan(alpha * (n_max + 0.5)))
