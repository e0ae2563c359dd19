import hashlib
import math
from pathlib import Path

import numpy as np
import pytest

from loopplots.figures import (
    RESULT_HEADER,
    TRACE_HEADER,
    FigureRequest,
    PlotsError,
    build_figure,
    read_table,
    render,
)

DATA = Path(__file__).resolve().parent / "data"


def sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_unknown_kind_rejected():
    with pytest.raises(PlotsError, match="figure kind"):
        FigureRequest("pie-chart", "x.csv", "y")


def test_header_mismatch_refused(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("model_id,kind,beta\nx,y,2.0\n")
    with pytest.raises(PlotsError, match="published schema"):
        render(FigureRequest("limit-curve", bad, tmp_path / "fig"))


def test_empty_table_refused(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text(",".join(TRACE_HEADER) + "\n")
    with pytest.raises(PlotsError, match="no data rows"):
        render(FigureRequest("trace-distance", empty, tmp_path / "fig"))


def test_missing_file_refused(tmp_path):
    with pytest.raises(PlotsError, match="cannot read"):
        read_table(tmp_path / "absent.csv", RESULT_HEADER)


def test_delta_rows_required(tmp_path):
    csv = tmp_path / "noreldeltas.csv"
    csv.write_text(
        ",".join(RESULT_HEADER) + "\n" + "abc,tanh-mean|zeta=free,2.0,1.0,1,2,0.5,0.01,900.0,7,\n"
    )
    with pytest.raises(PlotsError, match="delta rows"):
        render(FigureRequest("limit-curve", csv, tmp_path / "fig"))


def test_limit_curve_groups_variants():
    fig = build_figure(FigureRequest("limit-curve", DATA / "classical_limit.csv", "unused"))
    ax = fig.axes[0]
    labels = [t.get_text() for t in ax.get_legend().get_texts()]
    # two panel observables x two boundary variants
    assert len(labels) == 4
    assert all("," in lab for lab in labels)
    assert ax.get_xscale() == "log" and ax.get_yscale() == "log"


def test_order_parameter_has_asymptote_and_error_bars():
    fig = build_figure(FigureRequest("order-parameter", DATA / "order_parameter.csv", "unused"))
    ax = fig.axes[0]
    assert len(ax.containers) == 1  # the errorbar bundle
    flat = [ln for ln in ax.lines if len(set(ln.get_ydata())) == 1 and len(ln.get_xdata()) == 2]
    assert flat, "expected a horizontal asymptote line"
    curve_x = ax.containers[0][0].get_xdata()
    assert np.all(np.isfinite(curve_x)), "inf rows must feed the asymptote, not the curve"


def test_trace_distance_bound_and_slope():
    rows = read_table(DATA / "trace_distance.csv", TRACE_HEADER)
    dist = np.array([float(r["distance"]) for r in rows])
    bound = np.array([float(r["bound"]) for r in rows])
    assert np.all(bound >= dist)
    fig = build_figure(FigureRequest("trace-distance", DATA / "trace_distance.csv", "unused"))
    ax = fig.axes[0]
    texts = [t.get_text() for t in ax.texts]
    assert any(t.startswith("slope = ") for t in texts)
    slope = float(next(t for t in texts if t.startswith("slope = ")).split("= ")[1])
    assert abs(slope + 1.0) < 0.1  # the distance decays like 1/m


@pytest.mark.parametrize("kind,name", [
    ("limit-curve", "classical_limit.csv"),
    ("order-parameter", "order_parameter.csv"),
    ("trace-distance", "trace_distance.csv"),
])
def test_render_is_deterministic(tmp_path, kind, name):
    a = render(FigureRequest(kind, DATA / name, tmp_path / "a"))
    b = render(FigureRequest(kind, DATA / name, tmp_path / "b"))
    assert [p.suffix for p in a] == [".png", ".svg"]
    for pa, pb in zip(a, b):
        assert sha(pa) == sha(pb)


def test_explicit_suffix_writes_single_file(tmp_path):
    out = render(FigureRequest("trace-distance", DATA / "trace_distance.csv", tmp_path / "fig.svg"))
    assert out == [tmp_path / "fig.svg"]
    assert not (tmp_path / "fig.png").exists()
    assert b"<svg" in (tmp_path / "fig.svg").read_bytes()[:200]
