"""Per-array gradient check of the full model at small shapes.

    python3 scripts/gradcheck_report.py [--seeds 20]

Prints the worst relative error per parameter array across seeds, comparing
the analytic backward pass with central finite differences.
"""

import argparse
import time

import numpy as np

from gasgru import nn


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--eps", type=float, default=1e-5)
    args = ap.parse_args(argv)

    dims = nn.ModelDims(n_inputs=3, slots=5, hidden=4, layers=3, decoder_hidden=6)
    worst: dict[str, float] = {}
    t0 = time.perf_counter()
    for seed in range(args.seeds):
        rng = np.random.default_rng(seed)
        p = nn.init_params(dims, seed=seed)
        for _, a in p.named_arrays():
            if a.ndim == 1:
                a[:] = rng.normal(0, 0.3, a.shape)
        X = rng.normal(size=(3, 7, 3))
        y = rng.integers(0, 3, 3)
        for name, err in nn.gradient_check(p, X, y, eps=args.eps).items():
            worst[name] = max(worst.get(name, 0.0), err)
    for name, err in worst.items():
        print(f"{name:<20} {err:.2e}")
    print(f"max {max(worst.values()):.2e} over {args.seeds} seeds in {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
