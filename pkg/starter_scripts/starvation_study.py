#!/usr/bin/env python3
"""
Starvation Study Starter Script
Analytic vs Monte Carlo starvation curves over the file size, with and without BSC
Dependencies: numpy, scipy, pydantic, python-dotenv

Run from the repository root:
    python -m starter_scripts.starvation_study --rho 0.9 0.95 1.1 --sizes 200 600 1000 1500
"""

import os
import argparse
import logging
from typing import Dict, List, Optional, Sequence

from dotenv import load_dotenv

from app.ballot_analysis import starvation_count_pmf, starvation_prob
from app.config import Config
from app.des_simulator import replicate
from app.models import ArrivalProcess, OutputFormat, RunConfig, SessionParams
from app.qoe_planner import baseline_starvation_prob
from app.reporting import write_output
from app.stream_model import event_probs

# Load environment variables
load_dotenv()

COLUMNS = [
    "N", "rho", "x", "phi",
    "P_starv", "P_starv_hat", "P_starv_se", "within_3se",
    "P0", "P0_hat", "P_ge1", "P_ge1_hat", "P_ge2", "P_ge2_hat",
    "P_no_bsc", "P_no_bsc_hat",
]


class StarvationStudy:
    """
    Tabulates closed-form starvation figures against replicated sessions
    One row per (N, rho); the no-BSC columns reuse the same seeds with phi = 1
    """

    def __init__(self,
                 startup_x: int = 40,
                 offset_phi: int = 50,
                 runs: Optional[int] = None,
                 seed: Optional[int] = None,
                 workers: Optional[int] = None):
        self.startup_x = startup_x
        self.offset_phi = offset_phi
        self.runs = runs or Config.DEFAULT_RUNS
        self.seed = Config.DEFAULT_SEED if seed is None else seed
        self.workers = workers or int(os.getenv('BSC_WORKERS', str(Config.WORKERS)))

        # Setup logging
        logging.basicConfig(
            level=logging.INFO,
            format='%(asctime)s - %(levelname)s - %(message)s'
        )
        self.logger = logging.getLogger(__name__)

    def session(self, N: int, rho: float) -> SessionParams:
        return SessionParams(lam=rho, mu=1.0, file_size_N=N, startup_x=self.startup_x, offset_phi=self.offset_phi)

    def point(self, N: int, rho: float) -> Dict:
        params = self.session(N, rho)
        plain = params.with_changes(offset_phi=1)
        arrivals = ArrivalProcess.poisson(params.lam)

        pmf = starvation_count_pmf(params)
        stats = replicate(params, arrivals, self.runs, self.seed + N, self.workers)
        plain_stats = replicate(plain, arrivals, self.runs, self.seed + N, self.workers)
        p, q = event_probs(params)

        analytic = starvation_prob(params)
        hat = stats.starvation_prob_hat
        within = None if hat.stderr is None else abs(hat.value - analytic) <= 3 * hat.stderr
        if within is False:
            self.logger.warning(f"N={N}, rho={rho}: simulation differs from closed form by more than 3 SE")

        return {
            "N": N,
            "rho": rho,
            "x": self.startup_x,
            "phi": self.offset_phi,
            "P_starv": analytic,
            "P_starv_hat": hat.value,
            "P_starv_se": hat.stderr,
            "within_3se": within,
            "P0": float(pmf.probs[0]),
            "P0_hat": stats.pmf_hat[0].value,
            "P_ge1": pmf.at_least(1),
            "P_ge1_hat": stats.at_least(1).value,
            "P_ge2": pmf.at_least(2),
            "P_ge2_hat": stats.at_least(2).value,
            "P_no_bsc": baseline_starvation_prob(N, self.startup_x, p, q),
            "P_no_bsc_hat": plain_stats.starvation_prob_hat.value,
        }

    def run(self, sizes: Sequence[int], loads: Sequence[float]) -> List[Dict]:
        rows = []
        for rho in loads:
            for N in sizes:
                self.logger.info(f"Study point N={N}, rho={rho} ({self.runs} runs)")
                rows.append(self.point(N, rho))
        return rows

    def write(self, rows: List[Dict], out: Optional[str] = None, output_format: str = "csv") -> str:
        largest = max(row["N"] for row in rows)
        run_config = RunConfig(
            command="starvation_study",
            session=self.session(largest, rows[0]["rho"]),
            runs=self.runs,
            seed=self.seed,
            workers=self.workers,
            output_format=OutputFormat(output_format),
            out=out,
        )
        notes = [f"seed of point N is {self.seed} + N; no-BSC columns use the same seeds"]
        return write_output(run_config, COLUMNS, rows, notes=notes)


def main(argv: Optional[Sequence[str]] = None):
    """
    Example usage of the starvation study
    """
    parser = argparse.ArgumentParser(description="Analytic vs Monte Carlo starvation curves")
    parser.add_argument("--x", type=int, default=40)
    parser.add_argument("--phi", type=int, default=50)
    parser.add_argument("--rho", type=float, nargs="+", default=[0.9, 0.95, 1.1])
    parser.add_argument("--sizes", type=int, nargs="+", default=[200, 600, 1000, 1500])
    parser.add_argument("--runs", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out")
    parser.add_argument("--format", default="csv", choices=["csv", "json"])
    args = parser.parse_args(argv)

    study = StarvationStudy(args.x, args.phi, args.runs, args.seed, args.workers)
    rows = study.run(args.sizes, args.rho)
    study.write(rows, args.out, args.format)

    misses = [row for row in rows if row["within_3se"] is False]
    print(f"{len(rows)} points, {len(misses)} outside 3 standard errors")


if __name__ == "__main__":
    main()

# Development Environment Setup:
# 1. Install Python 3.9+
# 2. pip install -r requirements.txt
# 3. Run from the repository root so that `app` is importable
# 4. Set BSC_WORKERS to spread replications over processes

# Example .env file:
# BSC_RUNS=4000
# BSC_SEED=20160601
# BSC_WORKERS=4
