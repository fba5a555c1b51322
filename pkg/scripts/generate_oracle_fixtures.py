import os
import argparse
from typing import List, Tuple

from app.models import RunConfig, SessionParams
from app.path_oracle import enumerate_paths
from app.reporting import render_json

# Exact-comparison grid: every small session with x + phi - 1 <= N
MAX_N = 8
MAX_X = 3
MAX_PHI = 4
LOADS = (0.5, 1.0, 2.0)


def oracle_grid_points() -> List[Tuple[int, int, int, float]]:
    points = []
    for N in range(1, MAX_N + 1):
        for x in range(1, MAX_X + 1):
            for phi in range(1, MAX_PHI + 1):
                if x + phi - 1 > N:
                    continue
                for rho in LOADS:
                    points.append((N, x, phi, rho))
    return points


def fixture_name(N: int, x: int, phi: int, rho: float) -> str:
    return f"oracle_N{N}_x{x}_phi{phi}_rho{rho:g}.json"


def generate_oracle_fixtures(out_dir: str = "oracle_fixtures", rational: bool = True) -> int:
    """Write one oracle JSON document per grid point, in the layout of `oracle --format json`"""
    os.makedirs(out_dir, exist_ok=True)

    count = 0
    for N, x, phi, rho in oracle_grid_points():
        session = SessionParams(lam=rho, mu=1.0, file_size_N=N, startup_x=x, offset_phi=phi)
        run_config = RunConfig(command="oracle", session=session, rational=rational)
        result = enumerate_paths(session)

        filename = os.path.join(out_dir, fixture_name(N, x, phi, rho))
        with open(filename, 'w', encoding='utf-8') as f:
            f.write(render_json("oracle", result.to_dict(rational=rational), run_config))

        print(f"Generated {filename}")
        count += 1

    print(f"\nSuccessfully generated {count} oracle fixtures in the {out_dir}/ directory")
    return count


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Generate exact path-enumeration fixtures")
    parser.add_argument("--out-dir", default="oracle_fixtures")
    parser.add_argument("--float", dest="rational", action="store_false", help="Write floats instead of fractions")
    args = parser.parse_args()
    generate_oracle_fixtures(args.out_dir, args.rational)
