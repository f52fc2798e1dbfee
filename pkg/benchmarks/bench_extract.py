"""Throughput benchmark: JIT-compiled scan kernel vs pure-Python fallback.

Generates a seeded synthetic corpus and runs the full extraction pipeline
through both backends, printing records/s and the speedup.

    python benchmarks/bench_extract.py [--records 5000] [--repeat 3]
"""

import argparse
import time

from geoscholar import _kernels
from geoscholar.extract import extract_corpus
from geoscholar.gazetteer import default_gazetteer
from geoscholar.synth import SynthPlan, generate_corpus


def run(records, gaz, backend: str, repeat: int) -> float:
    _kernels.set_backend(backend)
    extract_corpus(records[:20], gaz)  # warmup / jit compile
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        extract_corpus(records, gaz, parallelism=1)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--records", type=int, default=5000)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    plan = SynthPlan(seed=args.seed, n_publications=args.records,
                     distractor_rate=0.25)
    records, _ = generate_corpus(plan)
    chars = sum(len(r.title) + len(r.abstract) for r in records)
    gaz = default_gazetteer()
    print(f"corpus: {len(records)} records, {chars / 1e6:.2f} M chars")

    results = {}
    backends = ["python"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    for backend in backends:
        dt = run(records, gaz, backend, args.repeat)
        results[backend] = dt
        print(f"{backend:>7}: {dt:8.3f} s   {len(records) / dt:10,.0f} records/s"
              f"   {chars / dt / 1e6:8.1f} M chars/s")
    if "numba" in results:
        print(f"speedup: {results['python'] / results['numba']:.1f}x")
    _kernels.set_backend("numba" if _kernels.HAVE_NUMBA else "python")


if __name__ == "__main__":
    main()
