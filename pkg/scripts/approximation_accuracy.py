"""Gap between the exact Polya log marginal and its JS approximation as N grows.

    python scripts/approximation_accuracy.py --K 20 --pairs 50
"""
import argparse

import numpy as np

from dmpi.divergence import JsWeights, js_log_likelihood, js_log_likelihood_kl_limit, polya_log_marginal


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--K", type=int, default=20)
    ap.add_argument("--pairs", type=int, default=50)
    ap.add_argument("--delta", type=float, default=1.0)
    ap.add_argument("--ratio", type=float, default=0.5, help="M / N")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    K, delta = args.K, args.delta
    print(f"{'N':>8} {'M':>8} {'JS gap / N':>12} {'KL gap / N':>12}")
    for N in (10**2, 10**3, 10**4, 10**5, 10**6):
        M = max(1, int(args.ratio * N))
        js_gap, kl_gap = [], []
        for _ in range(args.pairs):
            n = rng.multinomial(N, rng.dirichlet(np.ones(K)))
            c = rng.multinomial(M, rng.dirichlet(np.ones(K)))
            exact = polya_log_marginal(n, c + delta)
            q = (c + delta) / (M + delta * K)
            js = js_log_likelihood(n / N, q, JsWeights.from_draws(N, M, delta, K))
            kl = js_log_likelihood_kl_limit(n / N, q, N)
            js_gap.append(abs(exact - js) / N)
            kl_gap.append(abs(exact - kl) / N)
        print(f"{N:>8} {M:>8} {np.mean(js_gap):12.3e} {np.mean(kl_gap):12.3e}")


if __name__ == "__main__":
    main()
