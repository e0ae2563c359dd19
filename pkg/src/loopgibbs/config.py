"""Experiment configuration: strict key-tree schema, model builders, run manifests.

A configuration is a single YAML file whose key tree is validated eagerly:
unknown keys anywhere are rejected, every leaf is type- and range-checked,
and the model it describes is constructed once during parsing so that lattice,
coupling, potential, and sampler errors surface before any run starts.
"""

from __future__ import annotations

import dataclasses
import datetime
import hashlib
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .gibbs import MCParams, ModelSpec
from .lattice import CouplingSpec, LatticeBox, LatticeError, PotentialSpec
from .loops import BoundaryCondition, TemperatureLoop, equivalence_class_member

ARTIFACT_VERSION = "loopgibbs-artifacts-1"

LATTICE_KINDS = ("box", "torus")
PERTURBATION_KINDS = ("cos", "sin")


class ConfigError(ValueError):
    """A configuration file is malformed, has unknown keys, or fails validation."""


# ---------------------------------------------------------------------------
# strict mapping helpers


def _require_mapping(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"'{path}' must be a mapping, got {type(obj).__name__}")
    return obj


def _check_keys(mapping: dict, allowed: tuple[str, ...], path: str) -> None:
    unknown = [k for k in mapping if k not in allowed]
    if unknown:
        raise ConfigError(
            f"unknown key '{unknown[0]}' in '{path}' (allowed: {', '.join(allowed)})"
        )


def _get_number(mapping: dict, key: str, path: str, default=None) -> float:
    if key not in mapping:
        if default is None:
            raise ConfigError(f"missing required key '{key}' in '{path}'")
        return default
    v = mapping[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{path}.{key}' must be a number, got {v!r}")
    return float(v)


def _get_int(mapping: dict, key: str, path: str, default=None) -> int:
    if key not in mapping:
        if default is None:
            raise ConfigError(f"missing required key '{key}' in '{path}'")
        return default
    v = mapping[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"'{path}.{key}' must be an integer, got {v!r}")
    return v


def _get_bool(mapping: dict, key: str, path: str, default: bool) -> bool:
    if key not in mapping:
        return default
    v = mapping[key]
    if not isinstance(v, bool):
        raise ConfigError(f"'{path}.{key}' must be true or false, got {v!r}")
    return v


def _get_str(mapping: dict, key: str, path: str, default=None) -> str:
    if key not in mapping:
        if default is None:
            raise ConfigError(f"missing required key '{key}' in '{path}'")
        return default
    v = mapping[key]
    if not isinstance(v, str):
        raise ConfigError(f"'{path}.{key}' must be a string, got {v!r}")
    return v


def _int_keyed_table(obj, path: str) -> dict[int, float]:
    table = _require_mapping(obj, path)
    out: dict[int, float] = {}
    for k, v in table.items():
        # digit strings are accepted so a manifest's JSON snapshot re-parses
        if isinstance(k, str) and k.lstrip("-").isdigit():
            k = int(k)
        if isinstance(k, bool) or not isinstance(k, int):
            raise ConfigError(f"keys of '{path}' must be integers, got {k!r}")
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"values of '{path}' must be numbers, got {v!r}")
        out[k] = float(v)
    return out


def _site_tuple(obj, path: str) -> tuple[int, ...]:
    if not isinstance(obj, list) or not obj:
        raise ConfigError(f"'{path}' must be a nonempty list of integers")
    for c in obj:
        if isinstance(c, bool) or not isinstance(c, int):
            raise ConfigError(f"'{path}' must contain only integers, got {c!r}")
    return tuple(obj)


# ---------------------------------------------------------------------------
# config blocks


@dataclass(frozen=True)
class LatticeBlock:
    kind: str  # "box" (free or fixed boundary outside) or "torus" (periodic)
    shape: tuple[int, ...]

    @property
    def periodic(self) -> bool:
        return self.kind == "torus"

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    def build(self) -> LatticeBox:
        lo = tuple(0 for _ in self.shape)
        hi = tuple(s - 1 for s in self.shape)
        return LatticeBox(lo, hi)


@dataclass(frozen=True)
class ModelBlock:
    lattice: LatticeBlock
    coupling: CouplingSpec
    potential: PotentialSpec
    beta: float


@dataclass(frozen=True)
class DiscretizationBlock:
    n_max: int
    grid_size: int | None = None


@dataclass(frozen=True)
class SweepBlock:
    m_grid: tuple[float, ...]  # finite masses, positive and ascending
    include_infinity: bool

    @property
    def masses(self) -> tuple[float, ...]:
        """The full sweep grid, with the infinite-mass endpoint last if enabled."""
        return self.m_grid + ((math.inf,) if self.include_infinity else ())


@dataclass(frozen=True)
class PerturbationSpec:
    harmonic: int  # oscillatory index n >= 1
    kind: str  # "cos" | "sin"
    amplitude: float
    sites: tuple[tuple[int, ...], ...] | None = None  # None: every boundary site


@dataclass(frozen=True)
class BoundaryVariant:
    name: str
    perturbations: tuple[PerturbationSpec, ...] = ()


@dataclass(frozen=True)
class BoundaryBlock:
    y: float  # shared time average: all variants lie in one equivalence class
    variants: tuple[BoundaryVariant, ...]


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelBlock
    discretization: DiscretizationBlock
    sampler: MCParams
    sweep: SweepBlock
    boundary: BoundaryBlock | None
    seed: int
    out_dir: str

    # -- construction ------------------------------------------------------

    @classmethod
    def from_mapping(cls, raw) -> "ExperimentConfig":
        top = _require_mapping(raw, "config")
        _check_keys(
            top,
            ("model", "discretization", "sampler", "sweep", "boundary", "seed", "out_dir"),
            "config",
        )

        model = cls._parse_model(_require_mapping(top.get("model"), "model"))
        disc = cls._parse_discretization(top.get("discretization"))
        sampler = cls._parse_sampler(top.get("sampler"))
        sweep = cls._parse_sweep(_require_mapping(top.get("sweep"), "sweep"))
        boundary = cls._parse_boundary(top.get("boundary"), model)

        seed = _get_int(top, "seed", "config")
        if seed < 0:
            raise ConfigError("'config.seed' must be >= 0")
        out_dir = _get_str(top, "out_dir", "config", default="results")

        if boundary is not None:
            if model.coupling.reach < 1:
                raise ConfigError(
                    "'boundary' requires a coupling with reach >= 1 (nothing to attach to)"
                )
            for v in boundary.variants:
                for p in v.perturbations:
                    if p.harmonic > disc.n_max:
                        raise ConfigError(
                            f"boundary harmonic {p.harmonic} exceeds "
                            f"discretization.n_max {disc.n_max}"
                        )

        config = cls(model, disc, sampler, sweep, boundary, seed, out_dir)
        config.build_model()  # surface lattice construction errors eagerly
        return config

    @staticmethod
    def _parse_model(block: dict) -> ModelBlock:
        _check_keys(block, ("lattice", "coupling", "potential", "beta"), "model")

        lat = _require_mapping(block.get("lattice"), "model.lattice")
        _check_keys(lat, ("kind", "shape"), "model.lattice")
        kind = _get_str(lat, "kind", "model.lattice")
        if kind not in LATTICE_KINDS:
            raise ConfigError(
                f"'model.lattice.kind' must be one of {LATTICE_KINDS}, got {kind!r}"
            )
        shape_raw = lat.get("shape")
        shape = _site_tuple(shape_raw, "model.lattice.shape")
        if any(s < 1 for s in shape):
            raise ConfigError("'model.lattice.shape' entries must be >= 1")
        lattice = LatticeBlock(kind, shape)

        if "coupling" in block:
            cpl = _require_mapping(block["coupling"], "model.coupling")
            _check_keys(cpl, ("reach", "table"), "model.coupling")
            reach = _get_number(cpl, "reach", "model.coupling")
            table = _int_keyed_table(cpl.get("table", {}), "model.coupling.table")
            try:
                coupling = CouplingSpec(reach=reach, table=table)
            except LatticeError as e:
                raise ConfigError(f"model.coupling: {e}") from e
        else:
            coupling = CouplingSpec.zero()

        if "potential" in block:
            pot = _require_mapping(block["potential"], "model.potential")
            _check_keys(pot, ("a", "b"), "model.potential")
            a = _get_number(pot, "a", "model.potential", default=0.0)
            b = _int_keyed_table(pot.get("b", {}), "model.potential.b")
            try:
                potential = PotentialSpec(a=a, b=b)
            except LatticeError as e:
                raise ConfigError(f"model.potential: {e}") from e
        else:
            potential = PotentialSpec.zero()

        beta = _get_number(block, "beta", "model")
        if beta <= 0:
            raise ConfigError("'model.beta' must be > 0")
        return ModelBlock(lattice, coupling, potential, beta)

    @staticmethod
    def _parse_discretization(block) -> DiscretizationBlock:
        if block is None:
            raise ConfigError("missing required key 'discretization' in 'config'")
        block = _require_mapping(block, "discretization")
        _check_keys(block, ("n_max", "grid_size"), "discretization")
        n_max = _get_int(block, "n_max", "discretization")
        if n_max < 0:
            raise ConfigError("'discretization.n_max' must be >= 0")
        grid_size = None
        if block.get("grid_size") is not None:
            grid_size = _get_int(block, "grid_size", "discretization")
            if grid_size < 1:
                raise ConfigError("'discretization.grid_size' must be >= 1")
        return DiscretizationBlock(n_max, grid_size)

    @staticmethod
    def _parse_sampler(block) -> MCParams:
        if block is None:
            return MCParams()  # commands that never run a chain need no sampler block
        block = _require_mapping(block, "sampler")
        _check_keys(
            block,
            ("chains", "burn_in", "samples", "thin", "target_acceptance"),
            "sampler",
        )
        try:
            return MCParams(
                chains=_get_int(block, "chains", "sampler", default=2),
                n_burn=_get_int(block, "burn_in", "sampler", default=2000),
                n_samples=_get_int(block, "samples", "sampler", default=8000),
                thin=_get_int(block, "thin", "sampler", default=1),
                target_acceptance=_get_number(
                    block, "target_acceptance", "sampler", default=0.3
                ),
            )
        except ValueError as e:
            raise ConfigError(f"sampler: {e}") from e

    @staticmethod
    def _parse_sweep(block: dict) -> SweepBlock:
        _check_keys(block, ("m_grid", "include_infinity"), "sweep")
        raw_grid = block.get("m_grid")
        if not isinstance(raw_grid, list) or not raw_grid:
            raise ConfigError("'sweep.m_grid' must be a nonempty list")
        include_inf = _get_bool(block, "include_infinity", "sweep", default=False)
        finite: list[float] = []
        for i, v in enumerate(raw_grid):
            if isinstance(v, str):
                if v.lower() not in ("inf", "infinity"):
                    raise ConfigError(f"'sweep.m_grid[{i}]' must be a number or \"inf\"")
                v = math.inf
            elif isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"'sweep.m_grid[{i}]' must be a number or \"inf\"")
            v = float(v)
            if math.isinf(v):
                if i != len(raw_grid) - 1:
                    raise ConfigError("'sweep.m_grid': \"inf\" must be the last entry")
                include_inf = True
            else:
                finite.append(v)
        if any(m <= 0 for m in finite) or sorted(finite) != finite:
            raise ConfigError("'sweep.m_grid' must be positive and strictly ascending")
        if len(set(finite)) != len(finite):
            raise ConfigError("'sweep.m_grid' has duplicate entries")
        if not finite and not include_inf:
            raise ConfigError("'sweep' selects no masses")
        return SweepBlock(tuple(finite), include_inf)

    @staticmethod
    def _parse_boundary(block, model: ModelBlock) -> BoundaryBlock | None:
        if block is None:
            return None
        if model.lattice.periodic:
            raise ConfigError("'boundary' cannot be combined with a torus lattice")
        block = _require_mapping(block, "boundary")
        _check_keys(block, ("y", "variants"), "boundary")
        y = _get_number(block, "y", "boundary")
        raw_variants = block.get("variants")
        if raw_variants is None:
            return BoundaryBlock(y, (BoundaryVariant("constant"),))
        if not isinstance(raw_variants, list) or not raw_variants:
            raise ConfigError("'boundary.variants' must be a nonempty list")
        variants = []
        for i, rv in enumerate(raw_variants):
            path = f"boundary.variants[{i}]"
            rv = _require_mapping(rv, path)
            _check_keys(rv, ("name", "perturbations"), path)
            name = _get_str(rv, "name", path)
            if not name:
                raise ConfigError(f"'{path}.name' must be nonempty")
            perts = []
            for j, rp in enumerate(rv.get("perturbations", []) or []):
                ppath = f"{path}.perturbations[{j}]"
                rp = _require_mapping(rp, ppath)
                _check_keys(rp, ("harmonic", "kind", "amplitude", "sites"), ppath)
                harmonic = _get_int(rp, "harmonic", ppath)
                if harmonic < 1:
                    raise ConfigError(f"'{ppath}.harmonic' must be >= 1")
                kind = _get_str(rp, "kind", ppath, default="cos")
                if kind not in PERTURBATION_KINDS:
                    raise ConfigError(
                        f"'{ppath}.kind' must be one of {PERTURBATION_KINDS}"
                    )
                amplitude = _get_number(rp, "amplitude", ppath)
                sites = None
                if rp.get("sites") is not None:
                    if not isinstance(rp["sites"], list) or not rp["sites"]:
                        raise ConfigError(f"'{ppath}.sites' must be a nonempty list")
                    sites = tuple(
                        _site_tuple(s, f"{ppath}.sites[{k}]")
                        for k, s in enumerate(rp["sites"])
                    )
                perts.append(PerturbationSpec(harmonic, kind, amplitude, sites))
            variants.append(BoundaryVariant(name, tuple(perts)))
        names = [v.name for v in variants]
        if len(set(names)) != len(names):
            raise ConfigError("'boundary.variants' names must be unique")
        return BoundaryBlock(y, tuple(variants))

    # -- builders ----------------------------------------------------------

    def build_model(self) -> ModelSpec:
        """The model without boundary data (free / periodic as configured)."""
        lat = self.model.lattice
        return ModelSpec(
            box=lat.build(),
            coupling=self.model.coupling,
            potential=self.model.potential,
            beta=self.model.beta,
            n_max=self.discretization.n_max,
            periodic=lat.periodic,
            grid_size=self.discretization.grid_size,
        )

    def variant_names(self) -> tuple[str, ...]:
        if self.boundary is None:
            return ("free",)
        return tuple(v.name for v in self.boundary.variants)

    def boundary_condition(self, name: str) -> BoundaryCondition | None:
        """The boundary data for one named variant (None for the free case)."""
        if self.boundary is None:
            if name != "free":
                raise ConfigError(f"no boundary variant named {name!r}")
            return None
        by_name = {v.name: v for v in self.boundary.variants}
        if name not in by_name:
            raise ConfigError(f"no boundary variant named {name!r}")
        variant = by_name[name]

        model = self.build_model()
        basis = model.basis
        collar = model.box.exterior_collar(self.model.coupling.reach)
        if not collar:
            raise ConfigError(
                "'boundary' requires a coupling with reach >= 1 (nothing to attach to)"
            )
        perturbations: dict[tuple[int, ...], TemperatureLoop] = {}
        for pert in variant.perturbations:
            if pert.harmonic > self.discretization.n_max:
                raise ConfigError(
                    f"boundary harmonic {pert.harmonic} exceeds discretization.n_max "
                    f"{self.discretization.n_max}"
                )
            targets = pert.sites if pert.sites is not None else collar
            for site in targets:
                site = tuple(site)
                if site not in collar:
                    raise ConfigError(
                        f"boundary perturbation site {site} is not in the exterior collar"
                    )
                loop = TemperatureLoop.harmonic(
                    basis, pert.harmonic, pert.amplitude, kind=pert.kind
                )
                if site in perturbations:
                    loop = TemperatureLoop(
                        basis, perturbations[site].coeffs + loop.coeffs
                    )
                perturbations[site] = loop
        return equivalence_class_member(
            basis, collar, self.boundary.y, perturbations or None
        )

    def variant_model(self, name: str) -> ModelSpec:
        return dataclasses.replace(self.build_model(), boundary=self.boundary_condition(name))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        if seed < 0:
            raise ConfigError("seed must be >= 0")
        return dataclasses.replace(self, seed=int(seed))

    def with_out_dir(self, out_dir: str) -> "ExperimentConfig":
        return dataclasses.replace(self, out_dir=str(out_dir))

    # -- canonical snapshot ------------------------------------------------

    def to_mapping(self) -> dict:
        """Canonical nested-dict form: feeds the manifest and the run id."""
        model: dict = {
            "lattice": {
                "kind": self.model.lattice.kind,
                "shape": list(self.model.lattice.shape),
            },
            "coupling": {
                "reach": self.model.coupling.reach,
                "table": {str(k): v for k, v in sorted(self.model.coupling.table.items())},
            },
            "potential": {
                "a": self.model.potential.a,
                "b": {str(k): v for k, v in sorted(self.model.potential.b.items())},
            },
            "beta": self.model.beta,
        }
        out: dict = {
            "model": model,
            "discretization": {
                "n_max": self.discretization.n_max,
                "grid_size": self.discretization.grid_size,
            },
            "sampler": {
                "chains": self.sampler.chains,
                "burn_in": self.sampler.n_burn,
                "samples": self.sampler.n_samples,
                "thin": self.sampler.thin,
                "target_acceptance": self.sampler.target_acceptance,
            },
            "sweep": {
                "m_grid": list(self.sweep.m_grid),
                "include_infinity": self.sweep.include_infinity,
            },
            "seed": self.seed,
            "out_dir": self.out_dir,
        }
        if self.boundary is not None:
            out["boundary"] = {
                "y": self.boundary.y,
                "variants": [
                    {
                        "name": v.name,
                        "perturbations": [
                            {
                                "harmonic": p.harmonic,
                                "kind": p.kind,
                                "amplitude": p.amplitude,
                                "sites": None
                                if p.sites is None
                                else [list(s) for s in p.sites],
                            }
                            for p in v.perturbations
                        ],
                    }
                    for v in self.boundary.variants
                ],
            }
        return out


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    if raw is None:
        raise ConfigError(f"config file {path} is empty")
    return ExperimentConfig.from_mapping(raw)


def run_id(config: ExperimentConfig) -> str:
    """Deterministic 12-hex id of (artifact version, canonical config snapshot).

    The output directory is excluded: it names a destination, not an
    experiment, so rerouting results cannot silently change row identities.
    """
    snapshot = config.to_mapping()
    snapshot.pop("out_dir")
    payload = json.dumps(
        {"artifact": ARTIFACT_VERSION, "config": snapshot},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# run manifest


@dataclass
class RunManifest:
    """Reproducibility record: written to disk before any result row.

    Everything nondeterministic (timestamps, host, wall times) lives here and
    only here; result CSVs carry the run id so rows reference this record.
    """

    run_id: str
    command: str
    artifact_version: str
    config: dict
    root_seed: int
    tasks: list[dict] = field(default_factory=list)
    created_at: str = ""
    host: dict = field(default_factory=dict)
    finished_at: str | None = None
    wall_seconds: dict[str, float] = field(default_factory=dict)
    flags: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def create(cls, config: ExperimentConfig, command: str) -> "RunManifest":
        return cls(
            run_id=run_id(config),
            command=command,
            artifact_version=ARTIFACT_VERSION,
            config=config.to_mapping(),
            root_seed=config.seed,
            created_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
            host={
                "node": platform.node(),
                "platform": platform.platform(),
                "python": sys.version.split()[0],
            },
        )

    def add_task(self, task_index: int, label: str) -> None:
        # seed streams derive from (root_seed, task_index, chain); recording the
        # pair is enough to replay any task in isolation
        self.tasks.append(
            {"task_index": task_index, "label": label, "root_seed": self.root_seed}
        )

    def finish(self) -> None:
        self.finished_at = datetime.datetime.now(datetime.timezone.utc).isoformat()

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(dataclasses.asdict(self), indent=2) + "\n")
