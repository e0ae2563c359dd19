"""Brute-force Gauss-Hermite oracle for tiny instances.

Dense tensor-product quadrature over every free coordinate of a target: one
dimension per site classically (and quasiclassically, where oscillatory modes
are point masses at zero), one per (site, mode) for finite-mass loop targets.
Probabilists' Gauss-Hermite nodes are scaled by each coordinate's prior
standard deviation, so weights integrate the reference measure itself and a
Gibbs expectation is the ratio of two weighted sums with exp(-energy).

This exists to validate the chain machinery on matched instances, never to
approximate large models: the total dimension is capped at 8 and loop targets
only fit with very small mode truncations.  Energies go through the same
EnergyContext code paths as the samplers; the quasiclassical oracle in
particular evaluates the path-space functional, not its classical reduction,
so cross-checks between the two routes stay meaningful.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .energy import EnergyContext
from .gibbs import ConfigView, GibbsTarget
from .lattice import LatticeBox
from .loops import BoundaryCondition

MAX_DIMS = 8
WEIGHT_SUM_TOL = 1e-12
SELF_CHECK_TOL = 1e-7
_CHUNK = 262_144


class OracleDimensionError(ValueError):
    pass


class OracleSelfCheckWarning(UserWarning):
    pass


@dataclass(frozen=True)
class _Dim:
    site: int  # site index in the target's box
    mode: int | None  # mode index for loop targets, None for classical coordinates
    scale: float  # prior standard deviation of this coordinate


def hermite_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite nodes and N(0,1)-normalized weights.

    Golub-Welsch on the Jacobi matrix of the He recurrence; stable for node
    counts far beyond where direct polynomial evaluation overflows.
    """
    if n < 1:
        raise ValueError("need at least one node")
    if n == 1:
        return np.zeros(1), np.ones(1)
    off = np.sqrt(np.arange(1.0, n))
    jacobi = np.diag(off, 1) + np.diag(off, -1)
    nodes, vecs = np.linalg.eigh(jacobi)
    weights = vecs[0] ** 2
    return nodes, weights / weights.sum()


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product Gauss-Hermite rule over a target's free coordinates."""

    dims: tuple[_Dim, ...]
    nodes_1d: np.ndarray
    weights_1d: np.ndarray

    @classmethod
    def for_target(cls, target: GibbsTarget, nodes: int) -> "QuadratureGrid":
        dims = _dims_for(target)
        if len(dims) > MAX_DIMS:
            raise OracleDimensionError(
                f"{len(dims)} quadrature dimensions exceed the cap of {MAX_DIMS}"
            )
        x, w = hermite_rule(int(nodes))
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise RuntimeError("quadrature weights failed to normalize")
        return cls(tuple(dims), x, w)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes_1d.size,) * len(self.dims)

    @property
    def size(self) -> int:
        return self.nodes_1d.size ** len(self.dims)

    def assemble(self, flat_indices: np.ndarray, target: GibbsTarget):
        """States and weights for a block of flat grid indices."""
        idx = np.unravel_index(flat_indices, self.shape)
        states = np.zeros((flat_indices.size,) + target.state_shape())
        weights = np.ones(flat_indices.size)
        for d, dim in enumerate(self.dims):
            vals = self.nodes_1d[idx[d]] * dim.scale
            weights *= self.weights_1d[idx[d]]
            if dim.mode is None:
                states[:, dim.site] = vals
            else:
                states[:, dim.site, dim.mode] = vals
        return states, weights


def _dims_for(target: GibbsTarget) -> list[_Dim]:
    n_sites = target.n_sites
    if target.is_classical:
        sigma = 1.0 / math.sqrt(target.beta)
        return [_Dim(j, None, sigma) for j in range(n_sites)]
    spectrum = target.spectrum
    if spectrum.is_quasiclassical:
        # oscillatory coordinates are point masses at zero; only c_0 is free
        return [_Dim(j, 0, 1.0) for j in range(n_sites)]
    scales = spectrum.scales
    return [
        _Dim(j, mode, float(scales[mode]))
        for j in range(n_sites)
        for mode in range(spectrum.basis.n_modes)
    ]


def _default_nodes(n_dims: int) -> int:
    # calibrated on quartic-exponent integrands; the per-dimension count drops
    # as the tensor grid grows, so tolerances must come from the caller's tests
    if n_dims == 1:
        return 200
    if n_dims == 2:
        return 120
    if n_dims == 3:
        return 64
    if n_dims == 4:
        return 32
    if n_dims <= 6:
        return 16
    return 10


def _gibbs_sums(target: GibbsTarget, grid: QuadratureGrid, fn) -> tuple[float, float]:
    num = 0.0
    den = 0.0
    for start in range(0, grid.size, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, grid.size))
        states, weights = grid.assemble(flat, target)
        boltz = weights * np.exp(-target.energy_batch(states))
        if not np.all(np.isfinite(boltz)):
            raise FloatingPointError("non-finite Gibbs weight on the quadrature grid")
        den += float(boltz.sum())
        if fn is not None:
            vals = np.asarray(fn(ConfigView(target, states)), dtype=float)
            num += float((boltz * vals).sum())
    return num, den


def _expectation_once(target: GibbsTarget, fn, nodes: int) -> float:
    grid = QuadratureGrid.for_target(target, nodes)
    num, den = _gibbs_sums(target, grid, fn)
    if den <= 0.0:
        raise FloatingPointError("vanishing partition sum on the quadrature grid")
    return num / den


def _self_check_tol(n_dims: int) -> float:
    # what the default per-dimension node counts can actually deliver
    if n_dims <= 2:
        return SELF_CHECK_TOL
    if n_dims == 3:
        return 2e-4
    return 1e-3


def oracle_expectation(
    target: GibbsTarget, observable, nodes: int | None = None, self_check: bool | None = None
) -> float:
    """Quadrature value of E[f] under the target; refuses more than 8 dimensions.

    self_check=None reruns at 1.5x the node count when that stays cheap and
    warns (without withholding the result) if the value moves by more than the
    dimension's expected accuracy.
    """
    fn = getattr(observable, "fn", observable)
    n_dims = len(_dims_for(target))
    if n_dims > MAX_DIMS:
        raise OracleDimensionError(f"{n_dims} quadrature dimensions exceed the cap of {MAX_DIMS}")
    nodes = _default_nodes(n_dims) if nodes is None else int(nodes)
    value = _expectation_once(target, fn, nodes)
    refined_nodes = int(math.ceil(1.5 * nodes))
    if self_check is None:
        self_check = refined_nodes**n_dims <= 6_000_000
    if self_check:
        refined = _expectation_once(target, fn, refined_nodes)
        if abs(refined - value) > _self_check_tol(n_dims):
            warnings.warn(
                f"oracle self-check moved by {abs(refined - value):.3e} "
                f"({nodes} -> {refined_nodes} nodes)",
                OracleSelfCheckWarning,
            )
    return value


def oracle_partition(target: GibbsTarget, nodes: int | None = None) -> float:
    """Quadrature value of E_prior[exp(-energy)], the normalizing constant."""
    n_dims = len(_dims_for(target))
    nodes = _default_nodes(n_dims) if nodes is None else int(nodes)
    grid = QuadratureGrid.for_target(target, nodes)
    _, den = _gibbs_sums(target, grid, None)
    return den


def oracle_consistency(
    target: GibbsTarget, sub_box: LatticeBox, observable, nodes: int | None = None
) -> float:
    """|nested two-step kernel minus one-step kernel| for a sub-box, by quadrature.

    The inner kernel's energies are evaluated through a genuinely separate
    EnergyContext on the sub-box, with boundary data assembled from the outer
    node values and the original exterior data; nothing is shared with the
    outer energies, so agreement is a check, not an identity.
    """
    fn = getattr(observable, "fn", observable)
    if target.ctx.periodic:
        raise ValueError("kernel consistency concerns boundary-conditioned (non-periodic) targets")
    box = target.ctx.box
    sub_sites = sub_box.sites
    for s in sub_sites:
        if not box.contains(s):
            raise ValueError(f"sub-box site {s} outside the target box")
    if len(sub_sites) == len(box):
        raise ValueError("sub-box must be proper (use oracle_expectation otherwise)")

    n_dims = len(_dims_for(target))
    nodes = _default_nodes(n_dims) if nodes is None else int(nodes)
    grid = QuadratureGrid.for_target(target, nodes)

    # order dimensions: sub-box ("inner") coordinates minor, the rest major
    inner_ids = {box.index(s) for s in sub_sites}
    inner_dims = [d for d in grid.dims if d.site in inner_ids]
    rest_dims = [d for d in grid.dims if d.site not in inner_ids]
    n = grid.nodes_1d.size
    n_inner = n ** len(inner_dims)
    n_rest = n ** len(rest_dims)

    if target.is_classical:
        inner_shape: tuple[int, ...] = (len(sub_box),)
    else:
        inner_shape = (len(sub_box), target.ctx.basis.n_modes)

    # inner-state block is the same for every outer slice
    inner_states = np.zeros((n_inner,) + inner_shape)
    inner_weights = np.ones(n_inner)
    inner_idx = np.unravel_index(np.arange(n_inner), (n,) * len(inner_dims))
    for d, dim in enumerate(inner_dims):
        vals = grid.nodes_1d[inner_idx[d]] * dim.scale
        inner_weights *= grid.weights_1d[inner_idx[d]]
        sub_j = sub_box.index(box.site_at(dim.site))
        if dim.mode is None:
            inner_states[:, sub_j] = vals
        else:
            inner_states[:, sub_j, dim.mode] = vals

    # outer states for one slice: inner block with the slice's rest-values filled in
    outer_states = np.zeros((n_inner,) + target.state_shape())
    for d, dim in enumerate(inner_dims):
        if dim.mode is None:
            outer_states[:, dim.site] = inner_states[:, sub_box.index(box.site_at(dim.site))]
        else:
            outer_states[:, dim.site, dim.mode] = inner_states[
                :, sub_box.index(box.site_at(dim.site)), dim.mode
            ]

    z_out = 0.0
    direct_num = 0.0
    nested_num = 0.0
    rest_shape = (n,) * len(rest_dims)
    for slice_id in range(n_rest):
        rest_idx = np.unravel_index(slice_id, rest_shape) if rest_dims else ()
        w_rest = 1.0
        for d, dim in enumerate(rest_dims):
            val = float(grid.nodes_1d[rest_idx[d]]) * dim.scale
            w_rest *= float(grid.weights_1d[rest_idx[d]])
            if dim.mode is None:
                outer_states[:, dim.site] = val
            else:
                outer_states[:, dim.site, dim.mode] = val

        boltz_out = (inner_weights * w_rest) * np.exp(-target.energy_batch(outer_states))
        f_out = np.asarray(fn(ConfigView(target, outer_states)), dtype=float)
        z_out += float(boltz_out.sum())
        direct_num += float((boltz_out * f_out).sum())

        sub = _sub_target(target, sub_box, outer_states[0])
        boltz_in = inner_weights * np.exp(-sub.energy_batch(inner_states))
        f_in = np.asarray(fn(ConfigView(sub, inner_states)), dtype=float)
        h = float((boltz_in * f_in).sum()) / float(boltz_in.sum())
        nested_num += float(boltz_out.sum()) * h

    return abs(nested_num / z_out - direct_num / z_out)


def _sub_target(
    target: GibbsTarget, sub_box: LatticeBox, outer_state: np.ndarray
) -> GibbsTarget:
    """The sub-box target whose boundary is (outer values on box minus sub-box) + original data."""
    ctx = target.ctx
    box = ctx.box
    basis = ctx.basis
    collar = sub_box.exterior_collar(ctx.coupling.reach)
    sites = []
    coeffs = []
    for k in collar:
        if box.contains(k):
            if sub_box.contains(k):
                continue
            row = np.zeros(basis.n_modes)
            if target.is_classical:
                row[0] = outer_state[box.index(k)] * math.sqrt(basis.beta)
            else:
                row[:] = outer_state[box.index(k)]
            sites.append(k)
            coeffs.append(row)
        elif ctx.boundary is not None and k in ctx.boundary.sites:
            sites.append(k)
            coeffs.append(ctx.boundary.coeffs[ctx.boundary.site_index(k)].copy())
        elif ctx.boundary is None:
            # the parent model zero-extends outside its box
            sites.append(k)
            coeffs.append(np.zeros(basis.n_modes))
    boundary = None
    if sites:
        arr = np.asarray(coeffs)
        boundary = BoundaryCondition(
            basis, tuple(sites), arr, reduced=bool(np.all(arr[:, 1:] == 0.0))
        )
    sub_ctx = EnergyContext(
        sub_box,
        ctx.coupling,
        ctx.potential,
        basis,
        boundary=boundary,
        periodic=False,
        grid_size=ctx.grid_size,
    )
    return GibbsTarget(sub_ctx, target.kind, target.spectrum)
