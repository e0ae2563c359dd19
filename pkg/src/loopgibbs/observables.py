"""Observables, order parameters, mass sweeps, and the monotonicity check.

Observables are named functions of a ConfigView.  Class-invariant ones read
only time averages (and boundary time averages), so their value is constant on
each equivalence class of boundary data and they evaluate unchanged on
classical configurations.

Order parameters, per sample:

    P = (mean_j over the box of the path integral of omega_j / |box| ... )^2
      = (beta * mean_j xbar_j)^2          (loop measures)
    Q = (mean_j x_j)^2                    (classical measures)

On constant loops P = beta^2 Q exactly, so the sweeps also report the
normalized P~ = P / beta^2, which tends to Q itself in the large-mass limit;
for the free model E[P] = beta/|box| and E[Q] = 1/(beta |box|) at every mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gibbs import EstimateWithError, MCParams, ModelSpec, expectation


@dataclass(frozen=True)
class Observable:
    """A named function of a ConfigView; fn must vectorize over sample batches."""

    name: str
    fn: object
    class_invariant: bool = False

    def __call__(self, view):
        return self.fn(view)

    def renamed(self, name: str) -> "Observable":
        return Observable(name, self.fn, self.class_invariant)


def _require_loop(view):
    if view.target.is_classical:
        raise ValueError("order parameter P is defined on loop-valued measures")


def _require_classical(view):
    if not view.target.is_classical:
        raise ValueError("order parameter Q is defined on classical measures")


def order_parameter_P() -> Observable:
    def fn(view):
        _require_loop(view)
        return view.mean_time_integral() ** 2

    return Observable("order-parameter-P", fn, class_invariant=True)


def order_parameter_P_normalized() -> Observable:
    def fn(view):
        _require_loop(view)
        return view.mean_time_average() ** 2

    return Observable("order-parameter-P-tilde", fn, class_invariant=True)


def order_parameter_Q() -> Observable:
    def fn(view):
        _require_classical(view)
        return view.mean_time_average() ** 2

    return Observable("order-parameter-Q", fn, class_invariant=True)


def free_model_P(beta: float, n_sites: int) -> float:
    """E[P] for the interaction-free loop model, any mass: beta / n_sites."""
    return beta / n_sites


def free_model_Q(beta: float, n_sites: int) -> float:
    """E[Q] for the interaction-free classical model: 1 / (beta n_sites)."""
    return 1.0 / (beta * n_sites)


def tanh_of_average(site) -> Observable:
    site = tuple(site)

    def fn(view):
        return np.tanh(view.time_average(site))

    return Observable(f"tanh_mean@{site}", fn, class_invariant=True)


def gauss_of_average(site) -> Observable:
    site = tuple(site)

    def fn(view):
        return np.exp(-np.asarray(view.time_average(site)) ** 2)

    return Observable(f"gauss_mean@{site}", fn, class_invariant=True)


def clipped_square_of_average(site, bound: float = 4.0) -> Observable:
    site = tuple(site)

    def fn(view):
        return np.clip(np.asarray(view.time_average(site)) ** 2, 0.0, bound)

    return Observable(f"clip_sq_mean@{site}", fn, class_invariant=True)


def moment_of_average(site, power: int) -> Observable:
    site = tuple(site)

    def fn(view):
        return np.asarray(view.time_average(site)) ** power

    return Observable(f"mean_pow{power}@{site}", fn, class_invariant=True)


def limit_panel(site) -> list[Observable]:
    """The standard bounded-observable panel for classical-limit experiments."""
    return [tanh_of_average(site), gauss_of_average(site)]


@dataclass(frozen=True)
class SweepPoint:
    m: float  # inf for the quasiclassical endpoint
    observable: str
    kind: str  # target kind the estimate was taken under
    estimate: EstimateWithError
    tail_mass: float  # spectral mass beyond the mode truncation (0 at m = inf)


def mass_sweep(
    model: ModelSpec,
    m_grid,
    observable: Observable,
    mc: MCParams,
    root_seed: int,
    task_offset: int = 0,
) -> list[SweepPoint]:
    """Estimate one observable under the loop target at each mass in m_grid.

    Masses must be positive and ascending; inf is allowed as the final entry
    and runs the quasiclassical target.  Task indices (hence seed streams) are
    positional, so a sweep is reproducible regardless of how it is scheduled.
    """
    grid = [float(m) for m in m_grid]
    if not grid:
        raise ValueError("empty mass grid")
    if any(m <= 0 for m in grid) or sorted(grid) != grid:
        raise ValueError("mass grid must be positive and ascending")
    points = []
    for i, m in enumerate(grid):
        target = model.target(m)
        est = expectation(target, observable, mc, root_seed, task_index=task_offset + i)
        tail = 0.0 if math.isinf(m) else target.spectrum.tail_mass()
        points.append(SweepPoint(m, observable.name, target.kind, est, tail))
    return points


@dataclass(frozen=True)
class MonotonicityReport:
    status: str  # "pass" | "fail" | "refused"
    reason: str
    comparisons: tuple[tuple[float, float, float, float], ...] = ()
    # each entry: (m_lo, m_hi, observed difference, allowed slack)


def monotonicity_check(
    points: list[SweepPoint], model: ModelSpec, z: float = 3.0
) -> MonotonicityReport:
    """Check E[P] is nondecreasing in m, under the hypotheses that back the claim.

    Hypotheses: ferromagnetic (J >= 0) radially nonincreasing coupling, an
    on-site polynomial with positive leading even coefficient and nonnegative
    anharmonic coefficients throughout, and no per-site overrides.  Outside
    them the check refuses to run rather than asserting anything.
    """
    if not model.coupling.is_nonnegative():
        return MonotonicityReport("refused", "coupling takes negative values")
    if not model.coupling.is_radially_nonincreasing():
        return MonotonicityReport("refused", "coupling is not radially nonincreasing")
    if model.potential.overrides:
        return MonotonicityReport("refused", "per-site potential overrides break translation invariance")
    if not model.potential.is_phi4_family:
        return MonotonicityReport(
            "refused", "potential is not in the positive-leading even-polynomial family"
        )
    finite = [p for p in points if not math.isinf(p.m)]
    if len(finite) < 2:
        return MonotonicityReport("refused", "need at least two finite masses")
    comparisons = []
    ok = True
    for lo, hi in zip(finite, finite[1:]):
        diff = hi.estimate.estimate - lo.estimate.estimate
        slack = z * math.hypot(lo.estimate.stderr, hi.estimate.stderr)
        comparisons.append((lo.m, hi.m, diff, slack))
        if diff < -slack:
            ok = False
    return MonotonicityReport(
        "pass" if ok else "fail",
        "nondecreasing within slack" if ok else "decrease beyond the allowed slack",
        tuple(comparisons),
    )
