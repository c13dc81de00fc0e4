import logging
import os
import time

from dotenv import load_dotenv

from plapkit.vectorineq import run_inequality_suite, suite_passes

load_dotenv()

logger = logging.getLogger(__name__)

SAMPLES = int(os.getenv("BENCH_SAMPLES", "1000000"))
SEED = int(os.getenv("BENCH_SEED", "0"))
P_VALUES = [2.0, 2.5, 3.0, 4.0, 6.0, 10.0]
DIMS = list(range(1, 9))


def main():
    logging.basicConfig(level=os.getenv("PLAPKIT_LOG_LEVEL", "INFO"))
    start = time.perf_counter()
    rows = run_inequality_suite(P_VALUES, DIMS, SAMPLES, seed=SEED)
    elapsed = time.perf_counter() - start
    for row in rows:
        print(
            f"p={row['p']:<5g} samples={row['samples']:<8d} "
            f"lindqvist={row['min_lindqvist_rel']:+.3e} mhck={row['min_mhck_rel']:+.3e} "
            f"classical={row['min_classical_gap']:+.3e}"
        )
    print(f"passed={suite_passes(rows)} elapsed={elapsed:.2f}s")
    if elapsed > 30.0:
        logger.warning("inequality suite took %.1fs, above the 30s budget", elapsed)


if __name__ == "__main__":
    main()
