"""Run the simulation benchmark and print a per-size MAPE table.

    python scripts/run_benchmark.py --seeds 0,1,2 --desk

``--desk`` shortens the dynamic Poisson chains (burn-in 20,000, thin 50,
keep 400). Without it the full sampler settings are used, which takes hours.
"""

import argparse
import statistics
from collections import defaultdict

from smallmort import io
from smallmort.config import data_path
from smallmort.dynpoisson import DynPoissonConfig
from smallmort.fitting import MODELS, ModelParams, default_runners
from smallmort.simulation import DEFAULT_SIZES, run_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--desk", action="store_true")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default=None, help="optional metrics CSV")
    args = ap.parse_args()

    seeds = [int(s) for s in args.seeds.split(",")]
    dyn = DynPoissonConfig(burn_in=20_000, thin=50, keep=400) if args.desk else DynPoissonConfig()
    params = ModelParams(dyn_poisson=dyn, threads=args.threads)
    rows = run_benchmark(
        io.read_reference(data_path("reference.csv")),
        DEFAULT_SIZES,
        MODELS,
        io.read_standard(data_path("standard.csv"), "both"),
        seeds,
        runners=default_runners(params),
    )
    if args.out:
        io.write_metrics(rows, args.out)

    mape = defaultdict(list)
    for r in rows:
        if r.status == "ok":
            mape[(r.size, r.model)].append(r.mape)
    print(f"{'size':>9} " + " ".join(f"{m:>13}" for m in MODELS))
    for size in DEFAULT_SIZES:
        cells = [mape.get((float(size), m)) for m in MODELS]
        print(
            f"{size:>9} "
            + " ".join(f"{statistics.mean(c):13.4f}" if c else f"{'n/a':>13}" for c in cells)
        )


if __name__ == "__main__":
    main()
