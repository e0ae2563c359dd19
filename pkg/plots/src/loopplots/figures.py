"""Build and save the three figure kinds from result CSVs."""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# published result schemas, re-declared here on purpose: the engine is not a
# dependency and its internals must stay free to move under the same tables
RESULT_HEADER = (
    "model_id",
    "kind",
    "beta",
    "m",
    "n_sites",
    "n_max",
    "estimate",
    "stderr",
    "ess",
    "seed",
    "wall_seconds",
)
TRACE_HEADER = (
    "model_id",
    "beta",
    "m",
    "n_sites",
    "n_max",
    "distance",
    "closed_form",
    "bound",
    "bound_ok",
)

FIGURE_KINDS = {
    "limit-curve": RESULT_HEADER,
    "order-parameter": RESULT_HEADER,
    "trace-distance": TRACE_HEADER,
}

STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.family": "DejaVu Sans",
    "font.size": 10.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.framealpha": 0.9,
    "svg.hashsalt": "loopplots",
}


class PlotsError(ValueError):
    pass


@dataclass(frozen=True)
class FigureRequest:
    kind: str
    csv_path: str | Path
    out_path: str | Path
    title: str | None = None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise PlotsError(f"unknown figure kind {self.kind!r}; expected one of {sorted(FIGURE_KINDS)}")


def read_table(path, header) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            got = next(reader, None)
            if got != list(header):
                raise PlotsError(f"{path}: header {got} does not match the published schema {list(header)}")
            rows = [dict(zip(header, row)) for row in reader]
    except OSError as exc:
        raise PlotsError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise PlotsError(f"{path}: no data rows")
    return rows


def _num(text: str) -> float:
    try:
        return float(text)  # float() accepts "inf"
    except ValueError as exc:
        raise PlotsError(f"non-numeric table entry {text!r}") from exc


def _series(rows, key=lambda r: _num(r["m"])):
    rows = sorted(rows, key=key)
    return (
        np.array([_num(r["m"]) for r in rows]),
        np.array([_num(r["estimate"]) for r in rows]),
        np.array([_num(r["stderr"]) for r in rows]),
    )


def build_limit_curve(rows, request) -> plt.Figure:
    """Decay of |E_m[f] - classical| against m, one line per observable/variant."""
    groups: dict[str, list[dict]] = {}
    for r in rows:
        obs, _, tag = r["kind"].partition("|")
        if tag.startswith("delta:"):
            groups.setdefault(f"{obs}, {tag.removeprefix('delta:')}", []).append(r)
    if not groups:
        raise PlotsError("no delta rows found; need kinds of the form '<observable>|delta:<variant>'")
    fig, ax = plt.subplots()
    for label in sorted(groups):
        m, est, err = _series(groups[label])
        ax.errorbar(m, est, yerr=err, marker="o", capsize=3, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("m")
    ax.set_ylabel("|E_m[f] - classical reference|")
    ax.set_title(request.title or "classical-limit gap")
    ax.legend()
    return fig


def build_order_parameter(rows, request) -> plt.Figure:
    """P-tilde against m with the classical asymptote, error bars from stderr."""
    curve = [r for r in rows if r["kind"] == "order-parameter-P-tilde" and math.isfinite(_num(r["m"]))]
    if not curve:
        raise PlotsError("no finite-m 'order-parameter-P-tilde' rows to plot")
    asymptote = None
    for kind in ("order-parameter-Q", "order-parameter-P-tilde"):
        inf_rows = [r for r in rows if r["kind"] == kind and math.isinf(_num(r["m"]))]
        if inf_rows:
            asymptote = inf_rows[0]
            break
    fig, ax = plt.subplots()
    m, est, err = _series(curve)
    ax.errorbar(m, est, yerr=err, marker="o", capsize=3, label="P-tilde(m)")
    if asymptote is not None:
        ax.axhline(
            _num(asymptote["estimate"]),
            linestyle="--",
            color="black",
            label=f"classical limit ({asymptote['kind'].removeprefix('order-parameter-')})",
        )
    ax.set_xscale("log")
    ax.set_xlabel("m")
    ax.set_ylabel("order parameter")
    ax.set_title(request.title or "order parameter vs classical limit")
    ax.legend()
    return fig


def build_trace_distance(rows, request) -> plt.Figure:
    """Log-log trace distance with the 1/m bound overlaid and the fitted slope."""
    rows = sorted(rows, key=lambda r: _num(r["m"]))
    m = np.array([_num(r["m"]) for r in rows])
    dist = np.array([_num(r["distance"]) for r in rows])
    bound = np.array([_num(r["bound"]) for r in rows])
    if np.any(m <= 0) or np.any(dist <= 0):
        raise PlotsError("trace-distance figure needs positive masses and distances")
    fig, ax = plt.subplots()
    ax.plot(m, bound, linestyle="--", color="black", label="bound n |Lambda| beta^2 / (12 m)")
    ax.plot(m, dist, marker="o", linestyle="-", label="trace distance")
    ax.set_xscale("log")
    ax.set_yscale("log")
    slope = float(np.polyfit(np.log(m), np.log(dist), 1)[0]) if len(m) >= 2 else math.nan
    ax.annotate(f"slope = {slope:.3f}", xy=(0.05, 0.08), xycoords="axes fraction")
    ax.set_xlabel("m")
    ax.set_ylabel("trace-norm distance")
    ax.set_title(request.title or "covariance trace distance vs m")
    ax.legend()
    return fig


_BUILDERS = {
    "limit-curve": build_limit_curve,
    "order-parameter": build_order_parameter,
    "trace-distance": build_trace_distance,
}


def build_figure(request: FigureRequest) -> plt.Figure:
    rows = read_table(request.csv_path, FIGURE_KINDS[request.kind])
    with plt.rc_context(STYLE):
        return _BUILDERS[request.kind](rows, request)


def _save(fig: plt.Figure, path: Path) -> None:
    # strip everything nondeterministic from the files: SVG dates and ids are
    # pinned by metadata/hashsalt, PNG carries only a fixed software tag
    metadata = {"Date": None} if path.suffix == ".svg" else {"Software": "loopplots"}
    with plt.rc_context(STYLE):
        fig.savefig(path, metadata=metadata)


def render(request: FigureRequest) -> list[Path]:
    """Write the figure; a bare stem produces both .png and .svg."""
    fig = build_figure(request)
    out = Path(request.out_path)
    try:
        if out.suffix in (".png", ".svg"):
            out.parent.mkdir(parents=True, exist_ok=True)
            targets = [out]
        else:
            out.parent.mkdir(parents=True, exist_ok=True)
            targets = [out.with_suffix(".png"), out.with_suffix(".svg")]
        for path in targets:
            _save(fig, path)
    finally:
        plt.close(fig)
    return targets
