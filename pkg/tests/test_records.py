"""Test CSV tables, run records and replica seeding."""
import math

import pytest
import yaml

from sdlalab import __version__
from sdlalab.records import (
    RunRecord,
    file_digest,
    format_value,
    load_run_record,
    read_csv,
    verify_run_record,
    write_csv,
    write_run_record,
)
from sdlalab.scheduler import replica_rng, replica_seed, replica_seeds, run_replicas
from sdlalab.stats import Verdict


class TestCsv:
    """Test byte-stable table output."""

    def test_format_value(self):
        assert format_value(None) == ""
        assert format_value(True) == "true"
        assert format_value(0.1) == "0.1"
        assert format_value(math.nan) == "nan"
        assert format_value(3) == "3"

    def test_write_csv_bytes(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["k", "p", "ok"], [{"k": 1, "p": 0.25, "ok": False}, {"k": 2}])
        assert path.read_bytes() == b"k,p,ok\n1,0.25,false\n2,,\n"

    def test_read_back(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["a", "b"], [{"a": 1, "b": "x"}])
        assert read_csv(path) == [{"a": "1", "b": "x"}]

    def test_same_rows_same_digest(self, tmp_path):
        rows = [{"a": 1.5, "b": -2}]
        p1 = write_csv(tmp_path / "one.csv", ["a", "b"], rows)
        p2 = write_csv(tmp_path / "two.csv", ["a", "b"], rows)
        assert file_digest(p1) == file_digest(p2)


class TestRunRecord:
    """Test writing and verifying run records."""

    def _record(self, tmp_path):
        out = write_csv(tmp_path / "table.csv", ["a"], [{"a": 1}])
        record = RunRecord(config={"command": "dla"}, started="2026-01-01T00:00:00")
        record.add_output(out)
        record.summary = {"verdicts": {"dominating_rate": Verdict.PASS}, "pair": (1, 2)}
        return write_run_record(tmp_path / "run_record.yaml", record), out

    def test_plain_yaml(self, tmp_path):
        path, _ = self._record(tmp_path)
        data = yaml.safe_load(path.read_text())
        assert data["code_version"] == __version__
        assert data["summary"]["verdicts"]["dominating_rate"] == "pass"
        assert data["summary"]["pair"] == [1, 2]
        assert list(data["outputs"]) == ["table.csv"]

    def test_verify_ok(self, tmp_path):
        path, _ = self._record(tmp_path)
        assert verify_run_record(path) == {"table.csv": "ok"}

    def test_verify_mismatch(self, tmp_path):
        path, out = self._record(tmp_path)
        out.write_text("a\n2\n")
        assert verify_run_record(path) == {"table.csv": "mismatch"}

    def test_verify_missing(self, tmp_path):
        path, out = self._record(tmp_path)
        out.unlink()
        assert verify_run_record(path) == {"table.csv": "missing"}

    def test_no_temp_files_left(self, tmp_path):
        self._record(tmp_path)
        assert not list(tmp_path.glob(".run_record.*"))

    def test_not_a_record(self, tmp_path):
        path = tmp_path / "x.yaml"
        path.write_text("- 1\n")
        with pytest.raises(ValueError):
            load_run_record(path)


class TestReplicaSeeds:
    """Test replica seeding and ordered execution."""

    def test_seeds_are_distinct(self):
        seeds = replica_seeds(7, 200)
        assert len(set(seeds)) == 200
        assert all(0 <= s < 1 << 64 for s in seeds)

    def test_tags_separate_families(self):
        assert replica_seed(7, 0, tag=1) != replica_seed(7, 0, tag=2)
        assert replica_seed(7, 3, tag=1) == replica_seed(7, 3, tag=1)

    def test_replica_rng_reproducible(self):
        assert replica_rng(5).random() == replica_rng(5).random()

    def test_run_replicas_keeps_order(self):
        assert run_replicas(math.factorial, [3, 1, 2]) == [6, 1, 2]

    def test_worker_count_does_not_change_results(self):
        tasks = list(range(6))
        assert run_replicas(math.factorial, tasks, workers=2) == run_replicas(math.factorial, tasks, workers=1)
