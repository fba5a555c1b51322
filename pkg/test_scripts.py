#!/usr/bin/env python3
"""
Tests for the oracle fixture generator and the experiment starter scripts.
"""

import json
import os
from fractions import Fraction

import pytest

from app.models import SessionParams
from scripts.generate_oracle_fixtures import fixture_name, generate_oracle_fixtures, oracle_grid_points
from starter_scripts.arrival_process_study import ArrivalProcessStudy
from starter_scripts.starvation_study import COLUMNS, StarvationStudy


class TestOracleFixtures:
    def test_grid(self):
        points = oracle_grid_points()
        assert all(x + phi - 1 <= N <= 8 for N, x, phi, _ in points)
        assert (7, 1, 3, 1.0) in points
        assert len(points) == len(set(points))

    def test_fixtures_written(self, tmp_path):
        count = generate_oracle_fixtures(str(tmp_path))
        assert count == len(oracle_grid_points())
        assert len(os.listdir(tmp_path)) == count

        with open(tmp_path / fixture_name(7, 1, 3, 1.0)) as f:
            doc = json.load(f)
        assert doc["command"] == "oracle"
        assert doc["config"]["session"]["file_size_N"] == 7
        assert doc["data"]["starvation_prob"] == "151/256"
        assert sum(Fraction(v) for v in doc["data"]["pmf"]) == 1


class TestStarvationStudy:
    def test_rows(self, tmp_path):
        study = StarvationStudy(startup_x=10, offset_phi=5, runs=40, seed=3)
        rows = study.run([100, 200], [0.9])
        assert [row["N"] for row in rows] == [100, 200]
        for row in rows:
            assert set(COLUMNS) <= set(row)
            assert row["P_starv"] <= row["P_no_bsc"]
            assert row["P_ge1"] >= row["P_ge2"]

        out = tmp_path / "study.csv"
        study.write(rows, str(out))
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# toolkit=")
        assert lines[-3].startswith("N,rho,x,phi")
        assert len(lines) == 7


class TestArrivalProcessStudy:
    def test_rows(self):
        params = SessionParams(lam=0.9, mu=1.0, file_size_N=100, startup_x=5, offset_phi=5)
        study = ArrivalProcessStudy(params, runs=30, seed=1)
        rows = study.run()
        assert [(row["arrivals"], row["phi"]) for row in rows] == [
            ("poisson", 5), ("poisson", 1), ("logistic", 5), ("logistic", 1), ("on_off", 5), ("on_off", 1),
        ]
        assert rows[0]["P_starv_analytic"] is not None
        assert all(row["P_starv_analytic"] is None for row in rows[2:])
        for row in rows:
            assert row["mean_rate"] == pytest.approx(0.9)

    def test_json_output(self, tmp_path):
        params = SessionParams(lam=0.9, mu=1.0, file_size_N=60, startup_x=5, offset_phi=1)
        study = ArrivalProcessStudy(params, runs=10, seed=1)
        out = tmp_path / "arrivals.json"
        study.write(study.run(), str(out), "json")
        doc = json.loads(out.read_text())
        assert doc["command"] == "arrival_process_study"
        assert len(doc["data"]) == 3
        assert any("assumed shape" in note for note in doc["notes"])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
