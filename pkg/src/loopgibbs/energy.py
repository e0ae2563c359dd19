"""Interaction energy functionals, path-space and classical, free and periodic.

The path-space energy of an interior configuration omega given boundary data
zeta is

    sum_j integral U_j(omega_j)  +  (1/2) sum_{j,k in box} J_jk (omega_j, omega_k)
                                 +  sum_{j in box, k outside} J_jk (omega_j, zeta_k)

with all pair inner products taken in L2([0, beta]) and evaluated exactly as
Parseval dot products of coefficient vectors.  On-site integrals use the
uniform-grid trapezoid rule, which is exact for trigonometric polynomials once
the grid has at least deg(U) * n_max + 1 points.  The classical functional I
replaces loops by reals and drops the beta factor: path-space energy of a
constant embedding equals beta * I exactly.

Periodic variants measure distances through the torus metric of the box and
have no boundary term.  The harmonic term x^2/2 is not here: it lives in the
Gaussian reference measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import CouplingSpec, LatticeBox, LatticeError, PotentialSpec, euclidean_sqdist, periodic_sqdist
from .loops import BoundaryCondition, LoopConfiguration, ModeBasis

_BATCH_CHUNK = 262_144


class EnergyContextError(ValueError):
    pass


@dataclass(frozen=True)
class _Pair:
    i: int
    k: int
    j: float


class EnergyContext:
    """Precomputed pair lists, boundary fields, and quadrature for one model instance.

    boundary=None means zero boundary data (free field outside); partial
    boundary data over the interaction collar is an error, not a default.
    """

    def __init__(
        self,
        box: LatticeBox,
        coupling: CouplingSpec,
        potential: PotentialSpec,
        basis: ModeBasis,
        boundary: BoundaryCondition | None = None,
        periodic: bool = False,
        grid_size: int | None = None,
    ):
        self.box = box
        self.coupling = coupling
        self.potential = potential
        self.basis = basis
        self.boundary = boundary
        self.periodic = bool(periodic)
        self.beta = basis.beta
        self.n_sites = len(box)

        if periodic and potential.overrides:
            raise EnergyContextError("periodic energies require a translation-invariant potential")
        if periodic and boundary is not None:
            raise EnergyContextError("periodic energies take no boundary data")
        for site in potential.overrides:
            if not box.contains(site):
                raise EnergyContextError(f"potential override at {site} outside the box")
        if coupling.value_sq(0) != 0.0:
            raise EnergyContextError("on-diagonal coupling must vanish")

        p = max(
            [potential.half_degree] + [s.half_degree for s in potential.overrides.values()]
        )
        self.grid_size = (
            int(grid_size)
            if grid_size is not None
            else max(basis.default_grid_size, 2 * p * basis.n_max + 1)
        )
        if self.grid_size < 2 * basis.n_max + 1:
            raise EnergyContextError(
                f"grid_size {self.grid_size} aliases modes; need >= {2 * basis.n_max + 1}"
            )
        self.quad_weight = self.beta / self.grid_size
        self.design = basis.design_matrix(self.grid_size)

        sites = box.sites
        self.pairs: list[_Pair] = []
        for a in range(self.n_sites):
            for b in range(a + 1, self.n_sites):
                d2 = (
                    periodic_sqdist(sites[a], sites[b], box)
                    if periodic
                    else euclidean_sqdist(sites[a], sites[b])
                )
                j = coupling.value_sq(d2)
                if j != 0.0:
                    self.pairs.append(_Pair(a, b, j))
        self.neighbors: list[list[tuple[int, float]]] = [[] for _ in range(self.n_sites)]
        for pair in self.pairs:
            self.neighbors[pair.i].append((pair.k, pair.j))
            self.neighbors[pair.k].append((pair.i, pair.j))

        # boundary field b_j = sum_k J_jk zeta_k, one coefficient vector per site
        self.boundary_field = np.zeros((self.n_sites, basis.n_modes))
        if not periodic and not coupling.is_zero:
            collar = box.exterior_collar(coupling.reach)
            for k in collar:
                js = [
                    (a, coupling.value_sq(euclidean_sqdist(sites[a], k)))
                    for a in range(self.n_sites)
                ]
                js = [(a, j) for a, j in js if j != 0.0]
                if not js:
                    continue
                if boundary is None:
                    continue  # zero boundary data
                if basis != boundary.basis:
                    raise EnergyContextError("boundary data must share the interior basis")
                if k not in boundary.sites:
                    raise EnergyContextError(f"boundary data missing at coupled site {k}")
                zeta = boundary.coeffs[boundary.site_index(k)]
                for a, j in js:
                    self.boundary_field[a] += j * zeta
        # classical reduction of the boundary field: sum_k J_jk ybar_k
        self.boundary_scalar = self.boundary_field[:, 0] / math.sqrt(self.beta)

        # group sites by effective potential for vectorized on-site sums
        self._site_groups: list[tuple[PotentialSpec, np.ndarray]] = []
        by_spec: dict[int, tuple[PotentialSpec, list[int]]] = {}
        for idx, site in enumerate(sites):
            spec = potential.at_site(site)
            key = id(spec)
            by_spec.setdefault(key, (spec, []))[1].append(idx)
        for spec, idxs in by_spec.values():
            self._site_groups.append((spec, np.asarray(idxs, dtype=int)))
        self.site_potentials = [potential.at_site(site) for site in sites]

    # -- on-site integrals ---------------------------------------------------

    def paths(self, coeffs: np.ndarray) -> np.ndarray:
        """Grid values of each site's loop; coeffs (..., n_sites, n_modes)."""
        return np.asarray(coeffs) @ self.design.T

    def onsite_from_paths(self, paths: np.ndarray) -> np.ndarray:
        """Per-site integrals of U_j along given grid paths (..., n_sites, grid)."""
        out = np.empty(paths.shape[:-1])
        for spec, idxs in self._site_groups:
            vals = spec(paths[..., idxs, :])
            out[..., idxs] = vals.sum(axis=-1) * self.quad_weight
        return out

    def onsite_row(self, path_row: np.ndarray, site_index: int) -> float:
        spec = self.site_potentials[site_index]
        return float(np.sum(spec(path_row))) * self.quad_weight

    # -- full energies -------------------------------------------------------

    def euclidean_energy(self, config: LoopConfiguration | np.ndarray) -> float:
        coeffs = config.coeffs if isinstance(config, LoopConfiguration) else np.asarray(config)
        if coeffs.shape != (self.n_sites, self.basis.n_modes):
            raise EnergyContextError(f"configuration shape {coeffs.shape} does not fit this context")
        return float(self.euclidean_energy_batch(coeffs[None])[0])

    def euclidean_energy_batch(self, coeffs: np.ndarray) -> np.ndarray:
        """Energies of a batch of configurations, shape (batch, n_sites, n_modes)."""
        coeffs = np.asarray(coeffs, dtype=float)
        n = coeffs.shape[0]
        out = np.empty(n)
        for start in range(0, n, _BATCH_CHUNK):
            block = coeffs[start : start + _BATCH_CHUNK]
            e = self.onsite_from_paths(self.paths(block)).sum(axis=-1)
            for pair in self.pairs:
                e += pair.j * np.einsum("bm,bm->b", block[:, pair.i], block[:, pair.k])
            e += np.einsum("bjm,jm->b", block, self.boundary_field)
            out[start : start + _BATCH_CHUNK] = e
        return out

    def classical_energy(self, x: np.ndarray) -> float:
        """The classical functional I(x | ybar); path energy of constant_embed(x) is beta * I."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_sites,):
            raise EnergyContextError(f"classical configuration must have shape ({self.n_sites},)")
        return float(self.classical_energy_batch(x[None])[0])

    def classical_energy_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        e = np.zeros(x.shape[0])
        for spec, idxs in self._site_groups:
            e += spec(x[:, idxs]).sum(axis=-1)
        for pair in self.pairs:
            e += pair.j * x[:, pair.i] * x[:, pair.k]
        e += x @ self.boundary_scalar
        return e

    # -- incremental helpers for single-site chain updates --------------------

    def interaction_field(self, coeffs: np.ndarray, site_index: int) -> np.ndarray:
        """sum_{k != j} J_jk omega_k + boundary field at j, as a coefficient vector."""
        field = self.boundary_field[site_index].copy()
        for k, j in self.neighbors[site_index]:
            field += j * coeffs[k]
        return field

    def classical_interaction_field(self, x: np.ndarray, site_index: int) -> float:
        field = self.boundary_scalar[site_index]
        for k, j in self.neighbors[site_index]:
            field += j * x[k]
        return float(field)
