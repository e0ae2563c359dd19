import math

import numpy as np
import pytest

from loopgibbs.lattice import LatticeBox
from loopgibbs.loops import (
    BoundaryCondition,
    LoopConfiguration,
    ModeBasis,
    TemperatureLoop,
    constant_embed,
    equivalence_class_member,
)


def test_basis_mode_count_and_harmonics():
    basis = ModeBasis(beta=2.0, n_max=3)
    assert basis.n_modes == 7
    np.testing.assert_array_equal(basis.harmonics, [0, 1, 1, 2, 2, 3, 3])
    freqs = 2.0 * math.pi * basis.harmonics / basis.beta
    np.testing.assert_allclose(basis.abs_frequencies, freqs)


def test_basis_functions_are_orthonormal():
    """Trapezoid quadrature on the periodic grid is exact for these products."""
    basis = ModeBasis(beta=1.7, n_max=4)
    g = 4 * basis.n_max + 3  # above the 2*(2 n_max)+1 Nyquist requirement
    d = basis.design_matrix(g)
    gram = d.T @ d * (basis.beta / g)
    np.testing.assert_allclose(gram, np.eye(basis.n_modes), atol=1e-12)


def test_grid_omits_endpoint():
    basis = ModeBasis(beta=2.0, n_max=1)
    tau = basis.grid(8)
    assert tau.shape == (8,)
    assert tau[0] == 0.0
    assert tau[-1] < basis.beta
    np.testing.assert_allclose(np.diff(tau), basis.beta / 8)


def test_values_at_matches_design_matrix_row():
    basis = ModeBasis(beta=3.0, n_max=2)
    tau = basis.grid(11)
    d = basis.design_matrix(11)
    for i in (0, 3, 10):
        np.testing.assert_allclose(basis.values_at(tau[i]), d[i], atol=1e-14)


def test_constant_loop_time_average_roundtrip():
    basis = ModeBasis(beta=5.0, n_max=2)
    loop = TemperatureLoop.constant(basis, -1.25)
    assert loop.time_average() == pytest.approx(-1.25, abs=1e-15)
    np.testing.assert_allclose(loop.evaluate(16), -1.25)
    # only the zero mode is populated
    assert np.all(loop.coeffs[1:] == 0.0)
    assert loop.coeffs[0] == pytest.approx(-1.25 * math.sqrt(5.0))


def test_harmonic_loop_amplitude_and_mean():
    basis = ModeBasis(beta=2.0, n_max=3)
    loop = TemperatureLoop.harmonic(basis, n=2, amplitude=0.7, kind="cos")
    tau = basis.grid(64)
    np.testing.assert_allclose(
        loop.evaluate(64), 0.7 * np.cos(2 * math.pi * 2 * tau / basis.beta), atol=1e-14
    )
    assert loop.time_average() == 0.0
    # normalized-mode coefficient carries the sqrt(beta/2) factor
    assert loop.coeffs[3] == pytest.approx(0.7 * math.sqrt(basis.beta / 2.0))
    sin_loop = TemperatureLoop.harmonic(basis, n=1, amplitude=1.0, kind="sin")
    np.testing.assert_allclose(
        sin_loop.evaluate(64), np.sin(2 * math.pi * tau / basis.beta), atol=1e-14
    )
    with pytest.raises(ValueError):
        TemperatureLoop.harmonic(basis, n=4, amplitude=1.0)


def test_dot_is_parseval():
    basis = ModeBasis(beta=2.0, n_max=3)
    rng = np.random.default_rng(7)
    a = TemperatureLoop(basis, rng.standard_normal(basis.n_modes))
    b = TemperatureLoop(basis, rng.standard_normal(basis.n_modes))
    g = 64
    quad = float(np.sum(a.evaluate(g) * b.evaluate(g)) * basis.beta / g)
    assert a.dot(b) == pytest.approx(quad, abs=1e-12)
    assert a.dot(b) == pytest.approx(float(a.coeffs @ b.coeffs), abs=0)


def test_sup_norm_and_value_at():
    basis = ModeBasis(beta=2.0, n_max=1)
    loop = TemperatureLoop.harmonic(basis, 1, 2.0)
    assert loop.sup_norm(256) == pytest.approx(2.0, abs=1e-3)
    assert loop.value_at(0.0) == pytest.approx(2.0)
    assert loop.value_at(basis.beta / 2.0) == pytest.approx(-2.0)


def test_boundary_condition_from_loops_and_lookup():
    basis = ModeBasis(beta=2.0, n_max=2)
    loops = {
        (1,): TemperatureLoop.constant(basis, 0.5),
        (-1,): TemperatureLoop.harmonic(basis, 1, 1.0),
    }
    bc = BoundaryCondition.from_loops(loops)
    assert bc.sites == ((-1,), (1,))
    assert not bc.reduced  # the cosine part is oscillatory
    assert bc.time_average((1,)) == pytest.approx(0.5)
    assert bc.time_average((-1,)) == 0.0
    assert bc.time_averages() == {(-1,): 0.0, (1,): pytest.approx(0.5)}
    np.testing.assert_allclose(bc.loop((1,)).coeffs, loops[(1,)].coeffs)


def test_reduced_data_is_constant_loops():
    basis = ModeBasis(beta=2.0, n_max=2)
    bc = BoundaryCondition.reduced_data(basis, [(0,), (3,)], {(0,): 1.0, (3,): -1.0})
    assert bc.reduced
    assert bc.time_average((0,)) == pytest.approx(1.0)
    assert bc.time_average((3,)) == pytest.approx(-1.0)
    uniform = BoundaryCondition.reduced_data(basis, [(0,), (3,)], 2.0)
    assert uniform.time_average((3,)) == pytest.approx(2.0)


def test_equivalence_class_member_preserves_averages():
    basis = ModeBasis(beta=2.0, n_max=2)
    sites = [(-1,), (2,)]
    pert = TemperatureLoop.harmonic(basis, 1, 0.8)
    bc = equivalence_class_member(basis, sites, 1.0, {(-1,): pert})
    assert bc.time_average((-1,)) == pytest.approx(1.0)
    assert bc.time_average((2,)) == pytest.approx(1.0)
    assert not bc.reduced
    # the perturbed loop is constant + cosine
    tau = basis.grid(32)
    np.testing.assert_allclose(
        bc.loop((-1,)).evaluate(32), 1.0 + 0.8 * np.cos(2 * math.pi * tau / 2.0), atol=1e-14
    )


def test_equivalence_class_member_rejects_mean_shift():
    basis = ModeBasis(beta=2.0, n_max=1)
    bad = TemperatureLoop.constant(basis, 0.1)
    with pytest.raises(ValueError):
        equivalence_class_member(basis, [(0,)], 1.0, {(0,): bad})


def test_configuration_embed_project_roundtrip():
    basis = ModeBasis(beta=2.0, n_max=1)
    small = LatticeBox((0,), (1,))
    big = LatticeBox((-1,), (2,))
    rng = np.random.default_rng(3)
    cfg = LoopConfiguration(small, basis, rng.standard_normal((2, 3)))
    lifted = cfg.embed_into(big)
    assert lifted.box == big
    # zero loops outside the original box
    np.testing.assert_array_equal(lifted.coeffs[big.index((-1,))], 0.0)
    np.testing.assert_array_equal(lifted.coeffs[big.index((2,))], 0.0)
    back = lifted.project_onto(small)
    np.testing.assert_array_equal(back.coeffs, cfg.coeffs)


def test_constant_embed_time_averages():
    basis = ModeBasis(beta=7.0, n_max=2)
    box = LatticeBox((0,), (2,))
    values = np.array([0.5, -1.0, 2.0])
    cfg = constant_embed(values, box, basis)
    np.testing.assert_allclose(cfg.time_averages(), values, atol=1e-15)
    assert np.all(cfg.coeffs[:, 1:] == 0.0)


def test_csv_roundtrip(tmp_path):
    basis = ModeBasis(beta=2.0, n_max=2)
    box = LatticeBox((0, 0), (1, 0))
    rng = np.random.default_rng(11)
    cfg = LoopConfiguration(box, basis, rng.standard_normal((2, 5)))
    path = tmp_path / "dump.csv"
    cfg.save_csv(path)
    loaded = LoopConfiguration.load_csv(path, box, basis)
    np.testing.assert_array_equal(loaded.coeffs, cfg.coeffs)  # repr() round-trips floats


def test_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("site,mode,value\n0,0,1.0\n")
    with pytest.raises(ValueError):
        LoopConfiguration.load_csv(path, LatticeBox((0,), (0,)), ModeBasis(2.0, 0))


def test_npz_roundtrip(tmp_path):
    basis = ModeBasis(beta=3.0, n_max=1)
    box = LatticeBox((-1,), (1,))
    rng = np.random.default_rng(5)
    cfg = LoopConfiguration(box, basis, rng.standard_normal((3, 3)))
    path = tmp_path / "state.npz"
    cfg.save_npz(path)
    loaded = LoopConfiguration.load_npz(path)
    assert loaded.box == box
    assert loaded.basis == basis
    np.testing.assert_array_equal(loaded.coeffs, cfg.coeffs)


def test_configuration_shape_validation():
    with pytest.raises(ValueError):
        LoopConfiguration(LatticeBox((0,), (1,)), ModeBasis(2.0, 1), np.zeros((2, 2)))
