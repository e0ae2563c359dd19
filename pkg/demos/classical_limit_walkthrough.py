"""Walk a single double-well site from quantum to classical.

Sweeps the oscillator mass for one anharmonic site with a fixed boundary and
compares the sampled loop statistics against the exact classical value from
one-dimensional quadrature.  The discrepancy of E[tanh(mean x)] shrinks
roughly like 1/m, which is the whole story told in four rows.
"""

import argparse

from loopgibbs.gibbs import MCParams, ModelSpec, expectation
from loopgibbs.lattice import CouplingSpec, LatticeBox, PotentialSpec
from loopgibbs.loops import ModeBasis, equivalence_class_member
from loopgibbs.observables import tanh_of_average
from loopgibbs.oracle import oracle_expectation


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--masses", type=float, nargs="+", default=[1.0, 10.0, 100.0, 1000.0])
    parser.add_argument("--samples", type=int, default=30000)
    parser.add_argument("--burn-in", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=808)
    args = parser.parse_args(argv)

    beta, n_max = 2.0, 2
    box = LatticeBox((0,), (0,))
    coupling = CouplingSpec(reach=1.0, table={1: 1.0})
    potential = PotentialSpec(a=-1.0, b={2: 1.0})
    basis = ModeBasis(beta, n_max)
    boundary = equivalence_class_member(basis, box.exterior_collar(coupling.reach), 1.0)
    model = ModelSpec(box, coupling, potential, beta, n_max, boundary=boundary)

    obs = tanh_of_average((0,))
    reference = oracle_expectation(model.target_classical(), obs)
    print(f"classical reference (quadrature): E[tanh(x)] = {reference:.8f}\n")

    mc = MCParams(chains=2, n_burn=args.burn_in, n_samples=args.samples)
    print(f"sampled loop measure, {mc.chains} chains x {mc.n_samples} samples per mass:")
    print(f"  {'m':>8}  {'estimate':>12}  {'stderr':>8}  {'|delta|':>10}")
    for i, m in enumerate(sorted(args.masses)):
        est = expectation(model.target(m), obs, mc, args.seed, task_index=i)
        delta = abs(est.estimate - reference)
        print(f"  {m:8g}  {est.estimate:12.6f}  {est.stderr:8.4f}  {delta:10.6f}")
    print("\neach tenfold mass step cuts the discrepancy by about tenfold,")
    print("until it drowns in the Monte Carlo noise floor.")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
