"""Temperature loops: periodic paths on [0, beta] in a truncated Fourier basis.

A loop is stored as coefficients against the orthonormal real Fourier basis of
L2([0, beta]): index 0 is the constant mode 1/sqrt(beta); for n = 1..n_max the
pair (2n-1, 2n) holds sqrt(2/beta) cos(2 pi n tau / beta) and
sqrt(2/beta) sin(2 pi n tau / beta).  All inner products are Parseval dot
products of coefficient vectors; path values only appear through the uniform
evaluation grid used for on-site quadrature.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lattice import LatticeBox, LatticeError

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModeBasis:
    """Truncated Fourier basis on [0, beta] with modes n = 0..n_max (2 n_max + 1 functions)."""

    beta: float
    n_max: int

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be positive and finite, got {self.beta}")
        if self.n_max < 0 or int(self.n_max) != self.n_max:
            raise ValueError(f"n_max must be a nonnegative integer, got {self.n_max}")
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "n_max", int(self.n_max))

    @property
    def n_modes(self) -> int:
        return 2 * self.n_max + 1

    @property
    def harmonics(self) -> np.ndarray:
        """Integer harmonic n of each mode: [0, 1, 1, 2, 2, ...]."""
        n = np.arange(1, self.n_max + 1)
        return np.concatenate([[0], np.repeat(n, 2)])

    @property
    def abs_frequencies(self) -> np.ndarray:
        """|q| = 2 pi n / beta per mode."""
        return 2.0 * np.pi * self.harmonics / self.beta

    @property
    def default_grid_size(self) -> int:
        return max(4, 4 * self.n_max)

    def grid(self, grid_size: int | None = None) -> np.ndarray:
        """Uniform time grid tau_i = i beta / N, i = 0..N-1 (periodic, endpoint omitted)."""
        n = self.default_grid_size if grid_size is None else int(grid_size)
        if n < 1:
            raise ValueError("grid_size must be >= 1")
        return np.arange(n) * (self.beta / n)

    def design_matrix(self, grid_size: int | None = None) -> np.ndarray:
        """Matrix Phi with Phi[i, mode] = e_mode(tau_i); path values = coeffs @ Phi.T."""
        n = self.default_grid_size if grid_size is None else int(grid_size)
        return _design_matrix(self.beta, self.n_max, n)

    def values_at(self, tau: float) -> np.ndarray:
        """Basis values e_mode(tau) as a vector."""
        return _basis_row(self.beta, self.n_max, np.asarray([tau], dtype=float))[0]


@lru_cache(maxsize=64)
def _design_matrix(beta: float, n_max: int, grid_size: int) -> np.ndarray:
    tau = np.arange(grid_size) * (beta / grid_size)
    mat = _basis_row(beta, n_max, tau)
    mat.setflags(write=False)
    return mat


def _basis_row(beta: float, n_max: int, tau: np.ndarray) -> np.ndarray:
    out = np.empty((tau.size, 2 * n_max + 1))
    out[:, 0] = 1.0 / math.sqrt(beta)
    amp = math.sqrt(2.0 / beta)
    for n in range(1, n_max + 1):
        phase = (2.0 * np.pi * n / beta) * tau
        out[:, 2 * n - 1] = amp * np.cos(phase)
        out[:, 2 * n] = amp * np.sin(phase)
    return out


@dataclass(frozen=True)
class TemperatureLoop:
    """One periodic path, held as a coefficient vector against a ModeBasis."""

    basis: ModeBasis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.basis.n_modes,):
            raise ValueError(f"coefficients must have shape ({self.basis.n_modes},), got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def constant(cls, basis: ModeBasis, value: float) -> "TemperatureLoop":
        c = np.zeros(basis.n_modes)
        c[0] = value * math.sqrt(basis.beta)
        return cls(basis, c)

    @classmethod
    def harmonic(cls, basis: ModeBasis, n: int, amplitude: float, kind: str = "cos") -> "TemperatureLoop":
        """Path amplitude * cos(2 pi n tau / beta) (or sin); zero time average."""
        if not 1 <= n <= basis.n_max:
            raise ValueError(f"harmonic n must be in 1..{basis.n_max}, got {n}")
        if kind not in ("cos", "sin"):
            raise ValueError("kind must be 'cos' or 'sin'")
        c = np.zeros(basis.n_modes)
        c[2 * n - 1 if kind == "cos" else 2 * n] = amplitude * math.sqrt(basis.beta / 2.0)
        return cls(basis, c)

    def evaluate(self, grid_size: int | None = None) -> np.ndarray:
        return self.basis.design_matrix(grid_size) @ self.coeffs

    def value_at(self, tau: float) -> float:
        return float(self.basis.values_at(tau) @ self.coeffs)

    def time_average(self) -> float:
        # beta^{-1} integral of the path = c_0 / sqrt(beta), exactly
        return float(self.coeffs[0]) / math.sqrt(self.basis.beta)

    def sup_norm(self, grid_size: int | None = None) -> float:
        return float(np.max(np.abs(self.evaluate(grid_size))))

    def dot(self, other: "TemperatureLoop") -> float:
        """L2([0, beta]) inner product via Parseval."""
        if other.basis != self.basis:
            raise ValueError("inner product needs a shared basis")
        return float(self.coeffs @ other.coeffs)


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary data on a fixed set of exterior sites.

    Reduced data assigns one real value per site (a constant path); loop-valued
    data assigns a full coefficient vector.  Either way time averages are exact.
    """

    basis: ModeBasis
    sites: tuple[tuple[int, ...], ...]
    coeffs: np.ndarray  # (n_sites, n_modes)
    reduced: bool

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (len(self.sites), self.basis.n_modes):
            raise ValueError("boundary coefficient array has wrong shape")
        if self.reduced and np.any(c[:, 1:] != 0.0):
            raise ValueError("reduced boundary data cannot carry oscillatory modes")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "sites", tuple(tuple(s) for s in self.sites))

    @classmethod
    def reduced_data(
        cls, basis: ModeBasis, sites, values: float | dict[tuple[int, ...], float]
    ) -> "BoundaryCondition":
        sites = tuple(tuple(s) for s in sites)
        c = np.zeros((len(sites), basis.n_modes))
        for i, s in enumerate(sites):
            y = values if isinstance(values, (int, float)) else values[s]
            c[i, 0] = float(y) * math.sqrt(basis.beta)
        return cls(basis, sites, c, reduced=True)

    @classmethod
    def from_loops(cls, loops: dict[tuple[int, ...], TemperatureLoop]) -> "BoundaryCondition":
        if not loops:
            raise ValueError("empty boundary data")
        basis = next(iter(loops.values())).basis
        sites = tuple(sorted(loops))
        c = np.zeros((len(sites), basis.n_modes))
        for i, s in enumerate(sites):
            if loops[s].basis != basis:
                raise ValueError("boundary loops must share one basis")
            c[i] = loops[s].coeffs
        reduced = bool(np.all(c[:, 1:] == 0.0))
        return cls(basis, sites, c, reduced=reduced)

    def site_index(self, site: tuple[int, ...]) -> int:
        try:
            return self.sites.index(tuple(site))
        except ValueError:
            raise LatticeError(f"no boundary data at site {site}") from None

    def time_average(self, site: tuple[int, ...]) -> float:
        return float(self.coeffs[self.site_index(site), 0]) / math.sqrt(self.basis.beta)

    def loop(self, site: tuple[int, ...]) -> TemperatureLoop:
        return TemperatureLoop(self.basis, self.coeffs[self.site_index(site)].copy())

    def time_averages(self) -> dict[tuple[int, ...], float]:
        root = math.sqrt(self.basis.beta)
        return {s: float(self.coeffs[i, 0]) / root for i, s in enumerate(self.sites)}


def equivalence_class_member(
    basis: ModeBasis,
    sites,
    values: float | dict[tuple[int, ...], float],
    perturbations: dict[tuple[int, ...], TemperatureLoop] | None = None,
) -> BoundaryCondition:
    """Boundary data in the equivalence class with time averages `values`.

    Perturbations are loops added on top of the constant parts; each must have
    exactly zero time average, so membership in the class is preserved.
    """
    base = BoundaryCondition.reduced_data(basis, sites, values)
    if not perturbations:
        return base
    c = base.coeffs.copy()
    for site, pert in perturbations.items():
        if pert.basis != basis:
            raise ValueError("perturbation basis mismatch")
        if pert.coeffs[0] != 0.0:
            raise ValueError(f"perturbation at {site} shifts the time average (c_0 != 0)")
        c[base.site_index(tuple(site))] += pert.coeffs
    return BoundaryCondition(basis, base.sites, c, reduced=False)


@dataclass(frozen=True)
class LoopConfiguration:
    """One loop per site of a box: coefficient array of shape (n_sites, n_modes)."""

    box: LatticeBox
    basis: ModeBasis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (len(self.box), self.basis.n_modes):
            raise ValueError(
                f"coefficient array must have shape ({len(self.box)}, {self.basis.n_modes}), got {c.shape}"
            )
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, box: LatticeBox, basis: ModeBasis) -> "LoopConfiguration":
        return cls(box, basis, np.zeros((len(box), basis.n_modes)))

    def loop(self, site: tuple[int, ...]) -> TemperatureLoop:
        return TemperatureLoop(self.basis, self.coeffs[self.box.index(tuple(site))].copy())

    def time_averages(self) -> np.ndarray:
        return self.coeffs[:, 0] / math.sqrt(self.basis.beta)

    def evaluate(self, grid_size: int | None = None) -> np.ndarray:
        """Path values on the uniform grid, shape (n_sites, grid_size)."""
        return self.coeffs @ self.basis.design_matrix(grid_size).T

    def embed_into(self, box: LatticeBox) -> "LoopConfiguration":
        """Extend by zero loops onto a larger box containing this one."""
        out = np.zeros((len(box), self.basis.n_modes))
        for i, site in enumerate(self.box.sites):
            out[box.index(site)] = self.coeffs[i]
        return LoopConfiguration(box, self.basis, out)

    def project_onto(self, box: LatticeBox) -> "LoopConfiguration":
        """Restrict to another box; sites outside this one become zero loops."""
        out = np.zeros((len(box), self.basis.n_modes))
        for i, site in enumerate(box.sites):
            if self.box.contains(site):
                out[i] = self.coeffs[self.box.index(site)]
        return LoopConfiguration(box, self.basis, out)

    def save_csv(self, path) -> None:
        """Flat dump: one row per (site index, mode index, coefficient)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["site_index", "mode_index", "coefficient"])
            for i in range(self.coeffs.shape[0]):
                for m in range(self.coeffs.shape[1]):
                    writer.writerow([i, m, repr(float(self.coeffs[i, m]))])

    @classmethod
    def load_csv(cls, path, box: LatticeBox, basis: ModeBasis) -> "LoopConfiguration":
        coeffs = np.zeros((len(box), basis.n_modes))
        seen = np.zeros(coeffs.shape, dtype=bool)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["site_index", "mode_index", "coefficient"]:
                raise ValueError(f"unexpected loop dump header: {header}")
            for row in reader:
                i, m, val = int(row[0]), int(row[1]), float(row[2])
                coeffs[i, m] = val
                seen[i, m] = True
        if not seen.all():
            raise ValueError("loop dump does not cover every (site, mode) entry")
        return cls(box, basis, coeffs)

    def save_npz(self, path) -> None:
        np.savez(
            path,
            format_version=CHECKPOINT_FORMAT_VERSION,
            beta=self.basis.beta,
            n_max=self.basis.n_max,
            lo=np.asarray(self.box.lo),
            hi=np.asarray(self.box.hi),
            coeffs=self.coeffs,
        )

    @classmethod
    def load_npz(cls, path) -> "LoopConfiguration":
        with np.load(path) as data:
            if int(data["format_version"]) != CHECKPOINT_FORMAT_VERSION:
                raise ValueError(f"unsupported dump version {data['format_version']}")
            box = LatticeBox(tuple(int(v) for v in data["lo"]), tuple(int(v) for v in data["hi"]))
            basis = ModeBasis(float(data["beta"]), int(data["n_max"]))
            return cls(box, basis, data["coeffs"])


def constant_embed(values, box: LatticeBox, basis: ModeBasis) -> LoopConfiguration:
    """Embed one real per site as the constant loop with that value (c_0 = x sqrt(beta))."""
    x = np.asarray(values, dtype=float)
    if x.shape != (len(box),):
        raise ValueError(f"need one value per site, got shape {x.shape}")
    coeffs = np.zeros((len(box), basis.n_modes))
    coeffs[:, 0] = x * math.sqrt(basis.beta)
    return LoopConfiguration(box, basis, coeffs)
