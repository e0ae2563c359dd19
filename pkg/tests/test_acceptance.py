"""End-to-end acceptance checks, one test per numbered criterion.

Each test prints a one-line verdict; run with -s to see them:

    python3 -m pytest tests/test_acceptance.py -v -s
"""

import math
import time

import numpy as np

from loopgibbs import cli
from loopgibbs.gaussian import (
    CovarianceSpectrum,
    GaussianSampler,
    stream_for,
    trace_distance,
    trace_distance_bound,
    trace_tail_estimate,
)
from loopgibbs.gibbs import MCParams, ModelSpec, consistency_gap, expectation, run_chain
from loopgibbs.lattice import CouplingSpec, LatticeBox, PotentialSpec
from loopgibbs.loops import ModeBasis, TemperatureLoop, equivalence_class_member
from loopgibbs.observables import (
    free_model_P,
    free_model_Q,
    gauss_of_average,
    mass_sweep,
    monotonicity_check,
    order_parameter_P,
    order_parameter_P_normalized,
    order_parameter_Q,
    tanh_of_average,
)
from loopgibbs.oracle import oracle_expectation


def report(n, ok, detail):
    print(f"\n[acceptance] criterion {n}: {'PASS' if ok else 'FAIL'}")
    print(f"  {detail}")
    assert ok, f"criterion {n}: {detail}"


def double_well_model(n_sites=1, coupling=1.0, n_max=2, y=1.0, wobble=0.0):
    """n_sites-site box, U = x^4 - x^2, beta 2, constant boundary at y (+ optional cosine)."""
    box = LatticeBox((0,), (n_sites - 1,))
    spec = CouplingSpec(reach=1.0, table={1: coupling})
    basis = ModeBasis(2.0, n_max)
    collar = box.exterior_collar(spec.reach)
    perts = None
    if wobble:
        loop = TemperatureLoop.harmonic(basis, 1, wobble, kind="cos")
        perts = {s: loop for s in collar}
    bc = equivalence_class_member(basis, collar, y, perts)
    return ModelSpec(box, spec, PotentialSpec(a=-1.0, b={2: 1.0}), 2.0, n_max, boundary=bc)


def torus_model(length, coupling, n_max=2, dim=1):
    shape = (length,) * dim
    box = LatticeBox(tuple(0 for _ in shape), tuple(s - 1 for s in shape))
    return ModelSpec(
        box,
        CouplingSpec(reach=1.0, table={1: coupling}),
        PotentialSpec(a=-1.0, b={2: 1.0}),
        2.0,
        n_max,
        periodic=True,
    )


def test_criterion_1_trace_norm_convergence():
    t0 = time.perf_counter()
    beta = 2.0 * math.pi
    terms = 1_000_000
    errors, margins = [], []
    for m in [1.0, 10.0, 100.0, 1.0e4]:
        series = trace_distance(m, beta, n_max=terms) + trace_tail_estimate(m, beta, terms)
        x = beta / (2.0 * math.sqrt(m))
        closed = x / math.tanh(x) - 1.0
        errors.append(abs(series - closed))
        margins.append(trace_distance_bound(m, beta) - closed)
    elapsed = time.perf_counter() - t0
    ok = max(errors) <= 1e-8 and min(margins) >= 0.0 and elapsed < 1.0
    report(
        1,
        ok,
        f"max |series - closed| = {max(errors):.3g}, min bound margin = {min(margins):.3g}, "
        f"{elapsed:.3f}s",
    )


def test_criterion_2_zero_mode_variance():
    t0 = time.perf_counter()
    draws = 100_000
    basis = ModeBasis(2.0, 4)
    worst_z, rows = 0.0, []
    for i, m in enumerate([0.1, 1.0, 100.0, math.inf]):
        sampler = GaussianSampler(CovarianceSpectrum(basis, m), stream_for(26002, i))
        c0 = sampler.sample_batch(draws)[:, 0, 0]
        var = float(np.var(c0, ddof=1))
        se = float(np.std(c0 * c0, ddof=1)) / math.sqrt(draws)
        z = abs(var - 1.0) / se
        worst_z = max(worst_z, z)
        rows.append(f"m={m:g}: var={var:.5f} (z={z:.2f})")
    elapsed = time.perf_counter() - t0
    ok = worst_z <= 3.0 and elapsed < 10.0
    report(2, ok, "; ".join(rows) + f"; {elapsed:.2f}s")


def test_criterion_3_quasiclassical_support():
    models = [
        ModelSpec(LatticeBox((0,), (0,)), CouplingSpec(0.0), PotentialSpec(), 2.0, 2),
        double_well_model(),
        torus_model(2, 0.3, dim=2),
    ]
    mc = MCParams(chains=2, n_burn=200, n_samples=2000)
    chains = 0
    for i, model in enumerate(models):
        target = model.target(math.inf)
        for c in range(mc.chains):
            run = run_chain(target, mc, stream_for(26003, i, c))
            assert run.samples.shape[0] == mc.n_samples
            # support check is exact equality, not a tolerance
            assert np.all(run.samples[:, :, 1:] == 0.0)
            assert np.any(run.samples[:, :, 0] != 0.0)
            chains += 1
    report(3, True, f"{chains} quasiclassical chains x {mc.n_samples} samples, all oscillatory coefficients identically 0")


def test_criterion_4_quasiclassical_classical_identity():
    gaps = []
    for n_sites in (1, 2):
        model = double_well_model(n_sites=n_sites)
        for obs in (tanh_of_average((0,)), gauss_of_average((0,))):
            qc = oracle_expectation(model.target(math.inf), obs)
            cl = oracle_expectation(model.target_classical(), obs)
            gaps.append(abs(qc - cl))
    ok = max(gaps) <= 1e-9
    report(4, ok, f"4 instance/observable pairs, max |qc - classical| = {max(gaps):.3g}")


def test_criterion_5_classical_limit_panel():
    t0 = time.perf_counter()
    model = double_well_model()
    masses = [1.0, 10.0, 100.0, 1000.0]
    mc = MCParams(chains=2, n_burn=4000, n_samples=50_000)
    panel = [("tanh", tanh_of_average((0,))), ("gauss", gauss_of_average((0,)))]
    ok, parts = True, []
    for k, (name, obs) in enumerate(panel):
        ref = oracle_expectation(model.target_classical(), obs)
        deltas, ses = [], []
        for j, m in enumerate(masses):
            est = expectation(model.target(m), obs, mc, 26005, task_index=2 * j + k)
            deltas.append(abs(est.estimate - ref))
            ses.append(est.stderr)
        monotone = all(
            deltas[i + 1] <= deltas[i] + 3.0 * math.hypot(ses[i], ses[i + 1])
            for i in range(len(masses) - 1)
        )
        collapsed = deltas[-1] < deltas[0] / 5.0
        ok = ok and monotone and collapsed
        chain = " -> ".join(f"{d:.4f}" for d in deltas)
        parts.append(f"{name}: {chain} (monotone={monotone}, collapsed={collapsed})")
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 300.0
    report(5, ok, "; ".join(parts) + f"; {elapsed:.0f}s")


def test_criterion_6_boundary_class_collapse():
    flat = double_well_model()
    wavy = double_well_model(wobble=8.0)
    obs = tanh_of_average((0,))
    mc = MCParams(chains=2, n_burn=4000, n_samples=50_000)
    gap, se = {}, {}
    for j, m in enumerate([10.0, 1000.0]):
        a = expectation(flat.target(m), obs, mc, 26006, task_index=2 * j)
        b = expectation(wavy.target(m), obs, mc, 26006, task_index=2 * j + 1)
        gap[m] = abs(a.estimate - b.estimate)
        se[m] = math.hypot(a.stderr, b.stderr)
    # gap(1000) <= gap(10) / 2, allowing 3 combined standard errors of slack
    slack = 3.0 * math.hypot(se[10.0], 2.0 * se[1000.0])
    ok = gap[10.0] - 2.0 * gap[1000.0] >= -slack
    report(
        6,
        ok,
        f"gap(10) = {gap[10.0]:.4f} +- {se[10.0]:.4f}, gap(1000) = {gap[1000.0]:.4f} "
        f"+- {se[1000.0]:.4f}, shrink slack = {slack:.4f}",
    )


def test_criterion_7_periodic_limit_order_parameter():
    t0 = time.perf_counter()
    model = torus_model(2, 0.3, dim=2)
    mc = MCParams(chains=2, n_burn=4000, n_samples=40_000)
    p_tilde = order_parameter_P_normalized()
    quantum = expectation(model.target(1000.0), p_tilde, mc, 26007, task_index=0)
    qc_point = expectation(model.target(math.inf), p_tilde, mc, 26007, task_index=1)
    classical = expectation(model.target_classical(), order_parameter_Q(), mc, 26107, task_index=2)
    z_quantum = quantum.gap_z(classical)
    z_qc = qc_point.gap_z(classical)
    elapsed = time.perf_counter() - t0
    ok = z_quantum <= 3.0 and z_qc <= 3.0 and elapsed < 600.0
    report(
        7,
        ok,
        f"P~(1000) = {quantum.estimate:.5f}, P~(inf) = {qc_point.estimate:.5f}, "
        f"Q = {classical.estimate:.5f} (independent seed); z = {z_quantum:.2f}, {z_qc:.2f}; {elapsed:.0f}s",
    )


def test_criterion_8_monotonicity_and_refusal():
    model = torus_model(4, 0.35)
    mc = MCParams(chains=2, n_burn=4000, n_samples=30_000)
    points = mass_sweep(model, [0.5, 1.0, 2.0, 4.0, 8.0], order_parameter_P(), mc, 26008)
    verdict = monotonicity_check(points, model)

    antiferro = torus_model(4, -0.35)
    refused_j = monotonicity_check(points, antiferro)
    harmonic = ModelSpec(
        model.box, model.coupling, PotentialSpec(a=1.0), 2.0, model.n_max, periodic=True
    )
    refused_u = monotonicity_check(points, harmonic)

    curve = " -> ".join(f"{p.estimate.estimate:.4f}" for p in points)
    ok = (
        verdict.status == "pass"
        and refused_j.status == "refused"
        and refused_u.status == "refused"
    )
    report(
        8,
        ok,
        f"P: {curve} ({verdict.status}); J<0 -> {refused_j.status}, "
        f"harmonic-only U -> {refused_u.status}",
    )


def test_criterion_9_nested_kernel_consistency():
    model = double_well_model(n_sites=2, n_max=1)
    sub = LatticeBox((0,), (0,))
    obs = tanh_of_average((0,))
    gap_quantum = consistency_gap(model.target(1.0), sub, obs)
    gap_classical = consistency_gap(model.target_classical(), sub, obs)
    worst = max(gap_quantum, gap_classical)
    ok = worst < 1e-6
    report(9, ok, f"quantum gap = {gap_quantum:.3g}, classical gap = {gap_classical:.3g}")


def test_criterion_10_free_model_exactness():
    beta, n_sites = 2.0, 2
    model = ModelSpec(LatticeBox((0,), (n_sites - 1,)), CouplingSpec(0.0), PotentialSpec(), beta, 2)
    p_exact = free_model_P(beta, n_sites)
    q_exact = free_model_Q(beta, n_sites)
    assert p_exact == beta / n_sites
    assert q_exact == 1.0 / (beta * n_sites)
    mc = MCParams(chains=2, n_burn=1000, n_samples=20_000)
    rows, worst = [], 0.0
    for i, m in enumerate([0.1, 1.0, 100.0, math.inf]):
        est = expectation(model.target(m), order_parameter_P(), mc, 26010, task_index=i)
        z = abs(est.estimate - p_exact) / est.stderr
        worst = max(worst, z)
        rows.append(f"P(m={m:g}) z={z:.2f}")
    est = expectation(model.target_classical(), order_parameter_Q(), mc, 26010, task_index=9)
    zq = abs(est.estimate - q_exact) / est.stderr
    worst = max(worst, zq)
    rows.append(f"Q z={zq:.2f}")
    ok = worst <= 3.0
    report(10, ok, f"targets P = {p_exact}, Q = {q_exact}; " + "; ".join(rows))


CRITERION_11_CONFIG = """
model:
  lattice: {kind: box, shape: [1]}
  beta: 2.0
discretization: {n_max: 2}
sampler: {chains: 2, burn_in: 100, samples: 512}
sweep: {m_grid: [1.0, "inf"]}
seed: 26011
out_dir: unused
"""


def test_criterion_11_byte_determinism(tmp_path):
    config = tmp_path / "exp.yaml"
    config.write_text(CRITERION_11_CONFIG)
    outs = {
        "r1": ["--workers", "1"],
        "r2": ["--workers", "1"],
        "w2": ["--workers", "2"],
    }
    blobs = {}
    for name, extra in outs.items():
        out = tmp_path / name
        code = cli.main(["classical-limit", "--config", str(config), "--out", str(out)] + extra)
        assert code == 0
        blobs[name] = (out / "classical_limit.csv").read_bytes()
    ok = blobs["r1"] == blobs["r2"] == blobs["w2"]
    report(11, ok, f"{len(blobs['r1'])} CSV bytes identical across reruns and worker counts")
