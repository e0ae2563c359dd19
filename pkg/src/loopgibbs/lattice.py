"""Finite boxes in Z^d, radial pair couplings, and polynomial on-site potentials.

Boxes are axis-aligned products of integer intervals.  Couplings are radial
profiles tabulated on exact squared integer distances, so neighbour lookups
never compare floating-point radii.  Potentials are even polynomials
U(x) = a x^2 + sum_{l=2..p} b_l x^(2l); the harmonic part of the model is
carried by the Gaussian reference measure, not by U.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeBox:
    """Axis-aligned box {lo[0]..hi[0]} x ... x {lo[d-1]..hi[d-1]}, bounds inclusive."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or not self.lo:
            raise LatticeError("lo and hi must be nonempty tuples of equal length")
        object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(int(v) for v in self.hi))
        for a, b in zip(self.lo, self.hi):
            if a > b:
                raise LatticeError(f"empty axis: lo {a} > hi {b}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def side_lengths(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    def __len__(self) -> int:
        return int(np.prod(self.side_lengths))

    @property
    def sites(self) -> list[tuple[int, ...]]:
        # lexicographic order; this order fixes site indexing everywhere
        return list(itertools.product(*(range(a, b + 1) for a, b in zip(self.lo, self.hi))))

    def contains(self, site: tuple[int, ...]) -> bool:
        return len(site) == self.dim and all(
            a <= s <= b for s, a, b in zip(site, self.lo, self.hi)
        )

    def index(self, site: tuple[int, ...]) -> int:
        """Position of site in the lexicographic site list."""
        if not self.contains(site):
            raise LatticeError(f"site {site} outside box")
        idx = 0
        for s, a, n in zip(site, self.lo, self.side_lengths):
            idx = idx * n + (s - a)
        return idx

    def site_at(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < len(self):
            raise LatticeError(f"index {index} out of range")
        out = []
        for n in reversed(self.side_lengths):
            index, r = divmod(index, n)
            out.append(r)
        return tuple(a + r for a, r in zip(self.lo, reversed(out)))

    def exterior_collar(self, reach: float) -> list[tuple[int, ...]]:
        """Exterior sites within Euclidean distance `reach` of the box.

        These are exactly the sites whose coupling to some interior site can be
        nonzero, i.e. where boundary data is required.
        """
        if reach < 0:
            raise LatticeError("reach must be >= 0")
        pad = int(math.floor(reach))
        if pad == 0:
            return []
        r2 = exact_reach_sq(reach)
        collar = []
        ranges = [range(a - pad, b + pad + 1) for a, b in zip(self.lo, self.hi)]
        for site in itertools.product(*ranges):
            if self.contains(site):
                continue
            # nearest interior point is the coordinate-wise clamp
            d2 = 0
            for s, a, b in zip(site, self.lo, self.hi):
                c = min(max(s, a), b)
                d2 += (s - c) ** 2
            if d2 <= r2:
                collar.append(site)
        return collar


def euclidean_sqdist(j: tuple[int, ...], k: tuple[int, ...]) -> int:
    if len(j) != len(k):
        raise LatticeError("dimension mismatch")
    return sum((int(a) - int(b)) ** 2 for a, b in zip(j, k))


def periodic_sqdist(j: tuple[int, ...], k: tuple[int, ...], box: LatticeBox) -> int:
    """Squared torus distance: per axis min{|dj|, L - |dj|}, then summed squares."""
    if not box.contains(j) or not box.contains(k):
        raise LatticeError("periodic distance needs both sites inside the box")
    d2 = 0
    for a, b, n in zip(j, k, box.side_lengths):
        dd = abs(a - b)
        dd = min(dd, n - dd)
        d2 += dd * dd
    return d2


def periodic_distance(j: tuple[int, ...], k: tuple[int, ...], box: LatticeBox) -> float:
    return math.sqrt(periodic_sqdist(j, k, box))


def exact_reach_sq(reach: float) -> int:
    """Largest integer squared distance allowed by a Euclidean reach."""
    r2 = int(math.floor(reach * reach))
    # guard against reach*reach rounding just below an integer (e.g. sqrt(2)**2)
    if (r2 + 1) <= reach * reach * (1 + 1e-12):
        r2 += 1
    return r2


@dataclass(frozen=True)
class CouplingSpec:
    """Radial pair coupling tabulated on exact squared integer distances.

    table maps squared distance -> coupling value; missing keys mean 0.
    The on-diagonal value J at distance 0 must be 0 (self-coupling is rejected).
    """

    reach: float  # Euclidean interaction range r >= 0
    table: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.reach < 0:
            raise LatticeError("reach must be >= 0")
        r2 = exact_reach_sq(self.reach)
        clean: dict[int, float] = {}
        for key, val in self.table.items():
            if int(key) != key or key < 0:
                raise LatticeError(f"table keys are squared integer distances, got {key!r}")
            key = int(key)
            if key == 0 and val != 0.0:
                raise LatticeError("on-diagonal coupling J(0) must be 0")
            if key > r2:
                raise LatticeError(f"table entry at squared distance {key} beyond reach {self.reach}")
            if key > 0 and val != 0.0:
                clean[key] = float(val)
        object.__setattr__(self, "table", clean)

    @classmethod
    def zero(cls) -> "CouplingSpec":
        return cls(reach=0.0, table={})

    @classmethod
    def nearest_neighbor(cls, j0: float) -> "CouplingSpec":
        return cls(reach=1.0, table={1: float(j0)})

    def value_sq(self, sqdist: int) -> float:
        return self.table.get(int(sqdist), 0.0)

    @property
    def is_zero(self) -> bool:
        return not self.table

    def is_nonnegative(self) -> bool:
        return all(v >= 0.0 for v in self.table.values())

    def is_radially_nonincreasing(self) -> bool:
        """Nonincreasing in distance over 0 < rho <= reach (implicit zeros included)."""
        r2 = exact_reach_sq(self.reach)
        profile = [self.table.get(s, 0.0) for s in range(1, r2 + 1)]
        return all(x >= y for x, y in zip(profile, profile[1:]))


def coupling_norm(coupling: CouplingSpec, dim: int) -> float:
    """sup_j sum_k |J(|j-k|)| over the infinite lattice = one shell sum around 0."""
    if dim < 1:
        raise LatticeError("dim must be >= 1")
    pad = int(math.floor(coupling.reach))
    if pad == 0 or coupling.is_zero:
        return 0.0
    if (2 * pad + 1) ** dim > 2_000_000:
        raise LatticeError("interaction shell too large to enumerate")
    r2 = exact_reach_sq(coupling.reach)
    total = 0.0
    for k in itertools.product(range(-pad, pad + 1), repeat=dim):
        d2 = sum(c * c for c in k)
        if 0 < d2 <= r2:
            total += abs(coupling.value_sq(d2))
    return total


@dataclass(frozen=True)
class PotentialSpec:
    """Even polynomial on-site potential U(x) = a x^2 + sum_{l>=2} b_l x^(2l).

    Optional per-site overrides replace the whole potential at listed sites.
    """

    a: float = 0.0
    b: dict[int, float] = field(default_factory=dict)
    overrides: dict[tuple[int, ...], "PotentialSpec"] = field(default_factory=dict)

    def __post_init__(self):
        clean: dict[int, float] = {}
        for l, coeff in self.b.items():
            if int(l) != l or l < 2:
                raise LatticeError(f"anharmonic powers are integers l >= 2, got {l!r}")
            if coeff != 0.0:
                clean[int(l)] = float(coeff)
        object.__setattr__(self, "b", clean)
        for spec in self.overrides.values():
            if spec.overrides:
                raise LatticeError("nested per-site overrides are not allowed")

    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls()

    @classmethod
    def quadratic(cls, a: float) -> "PotentialSpec":
        return cls(a=a)

    @classmethod
    def double_well(cls) -> "PotentialSpec":
        # U(x) = x^4 - x^2
        return cls(a=-1.0, b={2: 1.0})

    @property
    def half_degree(self) -> int:
        """p such that deg U = 2p (0 for the zero potential)."""
        if self.b:
            return max(self.b)
        return 1 if self.a != 0.0 else 0

    @property
    def is_phi4_family(self) -> bool:
        """Leading even coefficient positive, anharmonic coefficients >= 0, one U everywhere."""
        if self.overrides or not self.b:
            return False
        return self.b[max(self.b)] > 0.0 and all(v >= 0.0 for v in self.b.values())

    @property
    def is_identically_zero(self) -> bool:
        return (
            self.a == 0.0
            and not self.b
            and all(o.a == 0.0 and not o.b for o in self.overrides.values())
        )

    def at_site(self, site: tuple[int, ...]) -> "PotentialSpec":
        return self.overrides.get(site, self)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        x2 = x * x
        out = self.a * x2
        for l, coeff in self.b.items():
            out = out + coeff * x2**l
        return out


@dataclass(frozen=True)
class StabilityReport:
    ok: bool
    witness: float | None  # a valid quadratic-lower-bound slope c~ when ok
    reason: str


def validate_stability(potential: PotentialSpec, coupling_norm_value: float) -> StabilityReport:
    """Check U(x) >= (c~/2) x^2 + b for some c~ > max{c-1, 0} and finite b.

    c is the coupling norm.  A positive leading anharmonic coefficient wins for
    any c; a purely quadratic U = a x^2 needs 2a strictly above the threshold.
    """
    threshold = max(coupling_norm_value - 1.0, 0.0)
    specs = [potential] + list(potential.overrides.values())
    witnesses = []
    for spec in specs:
        if spec.b:
            lead = spec.b[max(spec.b)]
            if lead <= 0.0:
                return StabilityReport(False, None, "leading anharmonic coefficient not positive")
            witnesses.append(threshold + 1.0)
        else:
            if 2.0 * spec.a > threshold:
                witnesses.append(2.0 * spec.a)
            else:
                return StabilityReport(
                    False,
                    None,
                    f"quadratic potential too weak: 2a = {2.0 * spec.a} <= max(c-1, 0) = {threshold}",
                )
    return StabilityReport(True, min(witnesses), "ok")
