"""Compare conditional Bernoulli draws with the exactly enumerated law.

For a handful of individuals the law of ``y | sum(y) = k`` can be listed
outright; the sampler's empirical frequencies should match it.
"""

import numpy as np
from scipy import stats

from gxesim.phenosim import brute_force_conditional_law, waffect_sample_many


def main() -> None:
    rng = np.random.default_rng(0)
    p = np.array([0.02, 0.1, 0.5, 0.5, 0.9, 0.3])
    k, draws = 3, 200_000
    law = brute_force_conditional_law(p, k)
    y = waffect_sample_many(p, k, draws, rng)
    observed = {key: 0 for key in law}
    for row in map(tuple, y.tolist()):
        observed[row] += 1
    print("configuration   exact     sampled")
    for key in sorted(law, key=law.get, reverse=True)[:8]:
        print(f"{''.join(map(str, key))}          {law[key]:.4f}    {observed[key] / draws:.4f}")
    expected = np.array([law[key] * draws for key in law])
    counts = np.array([observed[key] for key in law])
    print(f"chi-square p = {stats.chisquare(counts, expected).pvalue:.3f}; every draw has {k} cases: {bool(np.all(y.sum(1) == k))}")


if __name__ == "__main__":
    main()
