"""Compare the compiled kernel backend against the NumPy fallback.

Times the three hot operations (batch scoring, batch gradients, and
all-candidate scoring) for each score kind and prints per-op timings plus
the speedup. Run from the repository root:

    python3 benchmarks/bench_kernels.py --dim 200 --batch 4096
"""

import argparse
import time

import numpy as np

from demix_kge.kernels import BACKEND, get_backend
from demix_kge.scoring import init_model

KINDS = ("TransE", "RotatE", "DistMult", "ComplEx")


def best_of(repeats, fn):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_kind(kind, backend, args, rng):
    impl = get_backend(backend)
    model = init_model(args.entities, args.relations, args.dim, kind, margin=9.0, seed=0)
    code, norm_p, gamma = model.kind_code, model.norm_p, model.margin
    ent, rel = model.entity_table, model.relation_table
    n = args.batch
    h = rng.integers(0, args.entities, size=n)
    r = rng.integers(0, args.relations, size=n)
    t = rng.integers(0, args.entities, size=n)
    upstream = rng.standard_normal(n)
    out = np.empty(n)
    gh = np.empty((n, args.dim))
    gt = np.empty((n, args.dim))
    gr = np.empty((n, rel.shape[1]))
    all_out = np.empty(args.entities)

    results = {}
    results["score"] = best_of(
        args.repeats, lambda: impl.score_into(code, norm_p, gamma, ent, rel, h, r, t, out)
    )
    results["grad"] = best_of(
        args.repeats,
        lambda: impl.grad_into(code, norm_p, gamma, ent, rel, h, r, t, upstream, gh, gr, gt),
    )
    results["score_all"] = best_of(
        args.repeats,
        lambda: impl.score_all_into(code, norm_p, gamma, ent, rel, int(h[0]), int(r[0]), 1, all_out),
    )
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kinds", nargs="+", default=list(KINDS), choices=KINDS)
    parser.add_argument("--entities", type=int, default=20000)
    parser.add_argument("--relations", type=int, default=200)
    parser.add_argument("--dim", type=int, default=200)
    parser.add_argument("--batch", type=int, default=4096)
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    try:
        get_backend("c")
        backends = ["py", "c"]
    except (ImportError, ValueError):
        backends = ["py"]
        print("compiled backend unavailable; timing the fallback only")
    print(f"auto-selected backend: {BACKEND}")
    print(f"batch={args.batch} dim={args.dim} entities={args.entities} repeats={args.repeats} (best-of)")
    print(f"{'kind':<10} {'op':<10} " + " ".join(f"{b + ' ms':>10}" for b in backends) + ("   speedup" if len(backends) == 2 else ""))

    rng = np.random.default_rng(args.seed)
    for kind in args.kinds:
        timings = {b: bench_kind(kind, b, args, rng) for b in backends}
        for op in ("score", "grad", "score_all"):
            cols = " ".join(f"{timings[b][op] * 1e3:>10.3f}" for b in backends)
            line = f"{kind:<10} {op:<10} {cols}"
            if len(backends) == 2:
                line += f"   {timings['py'][op] / timings['c'][op]:>6.1f}x"
            print(line)


if __name__ == "__main__":
    main()
