"""Gibbs targets over loop or classical configurations, and their samplers.

A target couples an EnergyContext with a reference measure: the mass-m loop
prior (kind "quantum"), its m = inf constant-loop limit ("quasiclassical"), or
the classical product reference N(0, 1/beta) ("classical"); each comes in a
"-periodic" variant.  The chain is a preconditioned Crank-Nicolson walk: the
proposal sqrt(1-s^2) state + s * prior-draw preserves the reference measure
exactly, so the acceptance ratio is just exp(energy difference) and never sees
the Gaussian part.  Single-site sweeps update cached per-site on-site
integrals and use the interaction field for O(neighbourhood) energy deltas;
the cached total energy is audited against a full recomputation periodically.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .energy import EnergyContext
from .gaussian import CovarianceSpectrum, classical_sigma, stream_for
from .lattice import (
    CouplingSpec,
    LatticeBox,
    PotentialSpec,
    StabilityReport,
    coupling_norm,
    validate_stability,
)
from .loops import BoundaryCondition, ModeBasis

KINDS = (
    "quantum",
    "quasiclassical",
    "classical",
    "quantum-periodic",
    "quasiclassical-periodic",
    "classical-periodic",
)

CACHE_AUDIT_TOL = 1e-8


class StabilityError(ValueError):
    pass


class ChainCacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Everything that fixes a model instance except the mass."""

    box: LatticeBox
    coupling: CouplingSpec
    potential: PotentialSpec
    beta: float
    n_max: int
    periodic: bool = False
    boundary: BoundaryCondition | None = None
    grid_size: int | None = None

    @property
    def basis(self) -> ModeBasis:
        return ModeBasis(self.beta, self.n_max)

    def context(self) -> EnergyContext:
        return EnergyContext(
            self.box,
            self.coupling,
            self.potential,
            self.basis,
            boundary=self.boundary,
            periodic=self.periodic,
            grid_size=self.grid_size,
        )

    def target(self, m: float) -> "GibbsTarget":
        """The loop-valued target at mass m; m = inf gives the quasiclassical one."""
        base = "quasiclassical" if math.isinf(float(m)) else "quantum"
        kind = base + ("-periodic" if self.periodic else "")
        return GibbsTarget(self.context(), kind, CovarianceSpectrum(self.basis, m))

    def target_classical(self) -> "GibbsTarget":
        kind = "classical-periodic" if self.periodic else "classical"
        return GibbsTarget(self.context(), kind, None)


class GibbsTarget:
    """One Gibbs measure: exp(-energy) against its reference, normalized."""

    def __init__(self, ctx: EnergyContext, kind: str, spectrum: CovarianceSpectrum | None):
        if kind not in KINDS:
            raise ValueError(f"unknown target kind {kind!r}")
        base, _, suffix = kind.partition("-")
        if (suffix == "periodic") != ctx.periodic:
            raise ValueError(f"kind {kind!r} does not match the context's periodicity")
        if base == "classical":
            if spectrum is not None:
                raise ValueError("classical targets take no loop spectrum")
        else:
            if spectrum is None:
                raise ValueError(f"{base} targets need a covariance spectrum")
            if spectrum.basis != ctx.basis:
                raise ValueError("spectrum basis must match the context basis")
            if base == "quasiclassical" and not spectrum.is_quasiclassical:
                raise ValueError("quasiclassical targets need m = inf")
            if base == "quantum" and spectrum.is_quasiclassical:
                raise ValueError("quantum targets need finite m")
        self.ctx = ctx
        self.kind = kind
        self.spectrum = spectrum
        c = coupling_norm(ctx.coupling, ctx.box.dim)
        self.stability: StabilityReport = validate_stability(ctx.potential, c)
        # the quadratic-lower-bound criterion is sufficient, not necessary; the
        # exactly free model (U = 0, J = 0) has constant weight and needs no bound
        free = ctx.coupling.is_zero and ctx.potential.is_identically_zero
        if not self.stability.ok and not free:
            raise StabilityError(f"unstable model: {self.stability.reason}")

    @property
    def is_classical(self) -> bool:
        return self.spectrum is None

    @property
    def beta(self) -> float:
        return self.ctx.beta

    @property
    def n_sites(self) -> int:
        return self.ctx.n_sites

    @property
    def m(self) -> float | None:
        return None if self.spectrum is None else self.spectrum.m

    def state_shape(self) -> tuple[int, ...]:
        if self.is_classical:
            return (self.n_sites,)
        return (self.n_sites, self.ctx.basis.n_modes)

    def prior_draw(self, rng: np.random.Generator) -> np.ndarray:
        if self.is_classical:
            return rng.standard_normal(self.n_sites) * classical_sigma(self.beta)
        return rng.standard_normal(self.state_shape()) * self.spectrum.scales

    def energy(self, state: np.ndarray) -> float:
        """Exponent of the Gibbs weight: E(omega|zeta), or beta * I(x|y) classically."""
        return float(self.energy_batch(np.asarray(state)[None])[0])

    def energy_batch(self, states: np.ndarray) -> np.ndarray:
        if self.is_classical:
            return self.beta * self.ctx.classical_energy_batch(states)
        return self.ctx.euclidean_energy_batch(states)


@dataclass(frozen=True)
class MCParams:
    """Chain sizes and proposal settings; n_samples counts kept (post-thin) sweeps."""

    chains: int = 2
    n_burn: int = 2000
    n_samples: int = 8000
    thin: int = 1
    s0: float = 0.5  # initial Crank-Nicolson step, tuned during burn-in
    target_acceptance: float = 0.3
    tune: bool = True
    proposal: str = "site"  # "site" (sweeps) or "global"
    audit_every: int = 1000  # sweeps between energy-cache audits

    def __post_init__(self):
        if self.chains < 1 or self.n_samples < 1 or self.thin < 1 or self.n_burn < 0:
            raise ValueError("bad chain sizes")
        if self.proposal not in ("site", "global"):
            raise ValueError("proposal must be 'site' or 'global'")
        if not 0.0 < self.s0 < 1.0:
            raise ValueError("s0 must lie in (0, 1)")


@dataclass
class ChainRun:
    samples: np.ndarray  # (n_samples, n_sites[, n_modes])
    acceptance_rate: float
    s_final: float
    flags: tuple[str, ...]
    n_proposals: int


class ChainState:
    """Mutable chain state with cached paths, on-site integrals, and total energy."""

    def __init__(self, target: GibbsTarget, state: np.ndarray, s: float):
        self.target = target
        self.state = np.array(state, dtype=float)
        self.s = float(s)
        self.refresh_cache()

    def refresh_cache(self) -> None:
        ctx = self.target.ctx
        if self.target.is_classical:
            self.paths = None
            self.onsite = None
        else:
            self.paths = ctx.paths(self.state)
            self.onsite = ctx.onsite_from_paths(self.paths)
        self.energy = self.target.energy(self.state)

    def audit(self, tol: float = CACHE_AUDIT_TOL) -> None:
        """Recompute the energy from scratch and compare with the running value."""
        fresh = self.target.energy(self.state)
        if abs(fresh - self.energy) > tol * max(1.0, abs(fresh)):
            raise ChainCacheError(
                f"cached energy {self.energy} drifted from recomputed {fresh}"
            )
        self.refresh_cache()


def run_chain(
    target: GibbsTarget, mc: MCParams, rng: np.random.Generator
) -> ChainRun:
    """One pCN chain: burn-in with step tuning, then n_samples kept sweeps."""
    ctx = target.ctx
    state = ChainState(target, target.prior_draw(rng), mc.s0)
    flags: list[str] = []

    n_keep = mc.n_samples
    samples = np.empty((n_keep,) + target.state_shape())
    accepted = 0
    proposed = 0
    window_acc = 0
    window_n = 0
    kept = 0
    sweep = 0
    total_sweeps = mc.n_burn + n_keep * mc.thin

    scales = None if target.is_classical else target.spectrum.scales
    sigma = classical_sigma(target.beta) if target.is_classical else None

    while kept < n_keep:
        in_burn = sweep < mc.n_burn
        if mc.proposal == "global":
            acc = _global_update(target, state, rng)
            n_new = 1
        else:
            acc = 0
            for j in range(target.n_sites):
                acc += _site_update(target, state, j, rng, scales, sigma)
            n_new = target.n_sites
        proposed += 0 if in_burn else n_new
        accepted += 0 if in_burn else acc
        if in_burn and mc.tune:
            window_acc += acc
            window_n += n_new
            if window_n >= 50:
                rate = window_acc / window_n
                state.s = min(
                    0.99999, max(1e-4, state.s * math.exp(0.5 * (rate - mc.target_acceptance)))
                )
                window_acc = 0
                window_n = 0
        sweep += 1
        if not in_burn:
            if (sweep - mc.n_burn) % mc.thin == 0:
                samples[kept] = state.state
                kept += 1
        if mc.audit_every and sweep % mc.audit_every == 0:
            state.audit()
        if sweep > total_sweeps + 1:
            raise RuntimeError("sweep bookkeeping error")
    state.audit()

    rate = accepted / max(proposed, 1)
    if not 0.05 <= rate <= 0.95:
        flags.append(f"acceptance-rate-extreme:{rate:.3f}")
    if target.spectrum is not None and target.spectrum.is_quasiclassical:
        if np.any(samples[..., 1:] != 0.0):
            raise ChainCacheError("quasiclassical chain left the constant-loop support")
    return ChainRun(samples, rate, state.s, tuple(flags), proposed)


def _site_update(target, state, j, rng, scales, sigma) -> int:
    ctx = target.ctx
    s = state.s
    r = math.sqrt(1.0 - s * s)
    if target.is_classical:
        xi = rng.standard_normal() * sigma
        new = r * state.state[j] + s * xi
        spec = ctx.site_potentials[j]
        fld = ctx.classical_interaction_field(state.state, j)
        de = target.beta * (
            float(spec(new)) - float(spec(state.state[j])) + (new - state.state[j]) * fld
        )
        if _accept(de, rng):
            state.state[j] = new
            state.energy += de
            return 1
        return 0
    xi = rng.standard_normal(ctx.basis.n_modes) * scales
    new_row = r * state.state[j] + s * xi
    new_path = r * state.paths[j] + s * (ctx.design @ xi)
    new_onsite = ctx.onsite_row(new_path, j)
    fld = ctx.interaction_field(state.state, j)
    de = new_onsite - state.onsite[j] + float((new_row - state.state[j]) @ fld)
    if _accept(de, rng):
        state.state[j] = new_row
        state.paths[j] = new_path
        state.onsite[j] = new_onsite
        state.energy += de
        return 1
    return 0


def _global_update(target, state, rng) -> int:
    s = state.s
    r = math.sqrt(1.0 - s * s)
    proposal = r * state.state + s * target.prior_draw(rng)
    e_new = target.energy(proposal)
    de = e_new - state.energy
    if _accept(de, rng):
        state.state = proposal
        state.energy = e_new
        state.refresh_cache()
        return 1
    return 0


def _accept(de: float, rng: np.random.Generator) -> bool:
    u = rng.random()  # always drawn, keeps the stream layout fixed
    return de <= 0.0 or u < math.exp(-de)


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

N_BATCHES = 32


@dataclass(frozen=True)
class EstimateWithError:
    estimate: float
    stderr: float
    ess: float
    n_samples: int
    seed: int
    wall_seconds: float
    flags: tuple[str, ...] = ()

    def gap_z(self, other: "EstimateWithError") -> float:
        """|difference| in units of the combined standard error."""
        se = math.hypot(self.stderr, other.stderr)
        diff = abs(self.estimate - other.estimate)
        if se == 0.0:
            return 0.0 if diff == 0.0 else math.inf
        return diff / se


def batch_means(values: np.ndarray, n_batches: int = N_BATCHES) -> np.ndarray:
    """Means of n_batches consecutive equal blocks (any remainder dropped at the end)."""
    values = np.asarray(values, dtype=float)
    if values.size < n_batches:
        raise ValueError(f"need at least {n_batches} values for batch means")
    per = values.size // n_batches
    return values[: per * n_batches].reshape(n_batches, per).mean(axis=1)


def _pooled_estimate(
    all_values: list[np.ndarray], seed: int, wall: float, flags: tuple[str, ...]
) -> EstimateWithError:
    values = np.concatenate(all_values)
    bm = np.concatenate([batch_means(v) for v in all_values])
    point = float(values.mean())
    if bm.size > 1:
        se = float(bm.std(ddof=1) / math.sqrt(bm.size))
    else:
        se = 0.0
    var = float(values.var(ddof=1)) if values.size > 1 else 0.0
    if se == 0.0:
        ess = float(values.size)
    else:
        ess = min(float(values.size), var / (se * se))
    return EstimateWithError(point, se, ess, int(values.size), seed, wall, flags)


def expectation(
    target: GibbsTarget,
    observable,
    mc: MCParams,
    root_seed: int,
    task_index: int = 0,
) -> EstimateWithError:
    """Chain estimate of E[f] with batch-means standard error across mc.chains chains.

    f is evaluated on the full configuration: interior state plus the context's
    boundary data, through a ConfigView.
    """
    fn = getattr(observable, "fn", observable)
    t0 = time.perf_counter()
    flags: list[str] = []
    all_values = []
    for c in range(mc.chains):
        run = run_chain(target, mc, stream_for(root_seed, task_index, c))
        flags.extend(run.flags)
        view = ConfigView(target, run.samples)
        vals = np.asarray(fn(view), dtype=float)
        if vals.shape != (run.samples.shape[0],):
            raise ValueError(
                f"observable returned shape {vals.shape}, expected ({run.samples.shape[0]},)"
            )
        all_values.append(vals)
    wall = time.perf_counter() - t0
    return _pooled_estimate(all_values, root_seed, wall, tuple(dict.fromkeys(flags)))


def classical_kernel_expectation(
    target: GibbsTarget, observable, mc: MCParams, root_seed: int, task_index: int = 0
) -> EstimateWithError:
    """Same as expectation, for classical kinds only."""
    if not target.is_classical:
        raise ValueError("classical_kernel_expectation needs a classical target")
    return expectation(target, observable, mc, root_seed, task_index)


def log_partition_estimate(
    target: GibbsTarget, n_draws: int, root_seed: int, task_index: int = 0
) -> EstimateWithError:
    """Importance estimate log E_prior[exp(-energy)] with a delta-method error.

    The relative standard error of the mean weight is the standard error of the
    log; above 10% the result is flagged unreliable.
    """
    if n_draws < 2:
        raise ValueError("need at least 2 draws")
    t0 = time.perf_counter()
    rng = stream_for(root_seed, task_index, 0)
    shape = (n_draws,) + target.state_shape()
    if target.is_classical:
        states = rng.standard_normal(shape) * classical_sigma(target.beta)
    else:
        states = rng.standard_normal(shape) * target.spectrum.scales
    w = np.exp(-target.energy_batch(states))
    mean_w = float(w.mean())
    se_w = float(w.std(ddof=1) / math.sqrt(n_draws))
    rel = se_w / mean_w if mean_w > 0 else math.inf
    flags = ("partition-unreliable",) if rel > 0.10 else ()
    wall = time.perf_counter() - t0
    return EstimateWithError(float(np.log(mean_w)), rel, n_draws, n_draws, root_seed, wall, flags)


def consistency_gap(target: GibbsTarget, sub_box: LatticeBox, observable, nodes: int | None = None) -> float:
    """|two-step kernel minus one-step kernel| on an oracle-tractable instance."""
    from . import oracle

    return oracle.oracle_consistency(target, sub_box, observable, nodes=nodes)


def quasiclassical_to_classical(observable):
    """Reduce a class-invariant loop observable to its classical counterpart.

    Class-invariant observables only read time averages, so the same function
    body evaluates on classical views; the reduction is a re-tagging plus a
    guard, g(x) = f(constant embedding of x).
    """
    if not getattr(observable, "class_invariant", False):
        raise ValueError("only class-invariant observables reduce to classical kernels")
    from .observables import Observable

    return Observable(
        name=f"classical:{observable.name}", fn=observable.fn, class_invariant=True
    )


# ---------------------------------------------------------------------------
# Views: how observables read configurations
# ---------------------------------------------------------------------------


class ConfigView:
    """Uniform read access to one configuration or a batch of them.

    Interior sites come from the state array; exterior sites are served from
    the context's boundary data, so f(omega_box x zeta_outside) is literal.
    Methods return scalars for single states and 1-d arrays for batches.
    """

    def __init__(self, target: GibbsTarget, states: np.ndarray):
        self.target = target
        self.ctx = target.ctx
        states = np.asarray(states, dtype=float)
        self.batched = states.ndim == len(target.state_shape()) + 1
        if not self.batched and states.shape != target.state_shape():
            raise ValueError(f"state shape {states.shape} does not fit the target")
        self.states = states
        self._root_beta = math.sqrt(target.beta)

    @property
    def beta(self) -> float:
        return self.target.beta

    @property
    def sites(self) -> list[tuple[int, ...]]:
        return self.ctx.box.sites

    def _interior(self, site) -> int | None:
        site = tuple(site)
        return self.ctx.box.index(site) if self.ctx.box.contains(site) else None

    def time_average(self, site):
        idx = self._interior(site)
        if idx is not None:
            if self.target.is_classical:
                return self.states[..., idx]
            return self.states[..., idx, 0] / self._root_beta
        return self._boundary().time_average(site)

    def mean_time_average(self):
        """Average of interior time averages (batch-shaped)."""
        if self.target.is_classical:
            return self.states.mean(axis=-1)
        return self.states[..., 0].mean(axis=-1) / self._root_beta

    def mean_time_integral(self):
        """Average over sites of the loops' full time integrals.

        The integral of a loop over its period is sqrt(beta) c_0 exactly, so no
        quadrature is involved; a classical value x integrates to beta x.
        """
        if self.target.is_classical:
            return self.target.beta * self.states.mean(axis=-1)
        return self._root_beta * self.states[..., 0].mean(axis=-1)

    def coeff(self, site, mode: int):
        idx = self._interior(site)
        if idx is not None:
            if self.target.is_classical:
                if mode == 0:
                    return self.states[..., idx] * self._root_beta
                return np.zeros(self.states.shape[:-1]) if self.batched else 0.0
            return self.states[..., idx, mode]
        zeta = self._boundary()
        return float(zeta.coeffs[zeta.site_index(tuple(site)), mode])

    def value_at(self, site, tau: float):
        idx = self._interior(site)
        if idx is not None:
            if self.target.is_classical:
                return self.states[..., idx]
            row = self.ctx.basis.values_at(tau)
            return self.states[..., idx, :] @ row
        return self._boundary().loop(tuple(site)).value_at(tau)

    def _boundary(self) -> BoundaryCondition:
        if self.ctx.boundary is None:
            raise ValueError("no boundary data to read from")
        return self.ctx.boundary
