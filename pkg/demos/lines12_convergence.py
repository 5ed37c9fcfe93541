"""Small-scale convergence run on the three-dimensional ``lines12`` mixture.

AD-HMC with the ``adapt_many`` auxiliary (a Gaussian mixture re-fitted to
clusters of the ensemble every ``n_a`` iterations) is compared with plain HMC
using ``N(0, I)`` momenta. HMC is given twice as many iterations because each
AD-HMC iteration runs two motions. The figures are W2 distances to a fixed
cloud of exact target samples, so only the ordering is meaningful.

Run: ``python demos/lines12_convergence.py [particles] [iterations]``
(defaults 200 and 300; a couple of minutes on one core).
"""

import sys
import tempfile

from adhmc.harness.config import parse_config
from adhmc.harness.experiment import run_experiment


def main(particles=200, iterations=300):
    base = (f"target = lines12\nparticles = {particles}\niterations = {iterations}\n"
            f"n_a = {max(1, iterations // 4)}\nmetric_every = {max(1, iterations // 6)}\n"
            "compare_budget = true\nreplications = 2\nrecord_timing = false\n")
    runs = {"AD-HMC adapt_many": base + "scheme = adhmc\naux = adapt_many\n",
            "HMC N(0, I)": base + "scheme = hmc\naux = std_normal\n"}
    with tempfile.TemporaryDirectory() as tmp:
        for name, text in runs.items():
            _, summary = run_experiment(parse_config(text), f"{tmp}/{name.split()[0]}")
            print(name)
            for row in summary:
                print(f"  iteration {row['iteration']:5d}  W2 {row['w2_to_target_samples_mean']:.3f}"
                      f"  components {row['n_mixture_components_mean']:.1f}"
                      f"  acceptance {row['accepted_fraction_fwd_mean']:.3f}")


if __name__ == "__main__":
    main(*(int(a) for a in sys.argv[1:3]))
