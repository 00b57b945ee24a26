import json

import numpy as np
import pandas as pd
import pytest

from src.engine.analyzer import ComplexityAnalyzer
from src.engine.cli import main
from src.spectral.metrics import ComplexityReport
from src.spectral.perturbation import PerturbationParams
from src.spectral.svd import SvdQuality
from src.utils.errors import RatioUndefinedError

FAST = ["--k", "5", "--power-iterations", "2"]


def _interaction_set(frame):
    return {
        (str(r.user), str(r.item), float(r.rating), int(r.timestamp))
        for r in frame.itertuples(index=False)
    }


@pytest.fixture
def scores_csv(ratings_csv, tmp_path):
    path = tmp_path / "scores.csv"
    assert main(["score", "--input", str(ratings_csv), "--folds", "5", "--output", str(path), *FAST]) == 0
    return path


class TestAnalyze:
    def test_report_on_stdout(self, ratings_csv, capsys):
        assert main(["analyze", "--input", str(ratings_csv), *FAST]) == 0

        report = json.loads(capsys.readouterr().out)
        assert report["k"] == 5
        assert report["rmse_svd"] > 0
        assert report["config"]["command"] == "analyze"
        assert report["config"]["options"]["seed"] == 0

    def test_invalid_fraction(self, ratings_csv, capsys):
        assert main(["analyze", "--input", str(ratings_csv), "--p", "0", *FAST]) == 2
        assert capsys.readouterr().out == ""

    def test_sweep(self, ratings_csv, capsys):
        args = ["analyze", "--input", str(ratings_csv), "--p", "0.05,0.1,0.2", "--alpha", "0.3,0.5,0.7", *FAST]

        assert main(args) == 0

        payload = json.loads(capsys.readouterr().out)
        assert payload["schema"] == "sc.sweep/1"
        assert len(payload["reports"]) == 9
        assert {(r["params"]["p"], r["params"]["alpha"]) for r in payload["reports"]} == {
            (p, a) for p in (0.05, 0.1, 0.2) for a in (0.3, 0.5, 0.7)
        }

    def test_rerun_and_replay_are_byte_identical(self, ratings_csv, tmp_path):
        output = tmp_path / "report.json"
        args = ["analyze", "--input", str(ratings_csv), "--seed", "4", "--output", str(output), *FAST]

        assert main(args) == 0
        first = output.read_bytes()
        assert main(args) == 0
        assert output.read_bytes() == first

        output.unlink()
        snapshot = tmp_path / "snapshot.json"
        snapshot.write_bytes(first)
        assert main(["replay", str(snapshot)]) == 0
        assert output.read_bytes() == first

    def test_saved_plan(self, ratings_csv, tmp_path):
        plan = tmp_path / "plan.json"
        args = ["analyze", "--input", str(ratings_csv), "--save-plan", str(plan),
                "--output", str(tmp_path / "r.json"), *FAST]
        assert main(args) == 0
        assert json.loads(plan.read_bytes())

    def test_zero_baseline_prints_partial_report(self, ratings_csv, capsys, mocker):
        report = ComplexityReport(
            rmse=0.25, rmse_svd=0.0, rmse_sc=None, d_sc=0.5,
            params=PerturbationParams(), quality=SvdQuality(), k=2,
            n_pert=2, n_val=2, n_remove=0, n_add=0, clamped_count=0,
            sigma=np.array([3.0, 1.0]), delta_sigma=np.array([0.5, -0.5]),
        )
        mocker.patch.object(
            ComplexityAnalyzer, "analyze",
            side_effect=RatioUndefinedError("baseline RMSE is 0", report=report),
        )

        assert main(["analyze", "--input", str(ratings_csv), *FAST]) == 4

        captured = capsys.readouterr()
        partial = json.loads(captured.out)
        assert partial["rmse_sc"] is None
        assert partial["rmse"] == 0.25
        assert partial["rmse_svd"] == 0.0
        assert partial["sigma"] == [3.0, 1.0]
        assert partial["config"]["command"] == "analyze"
        assert "baseline RMSE is 0" in captured.err


class TestScore:
    def test_every_rating_scored(self, ratings_csv, scores_csv):
        frame = pd.read_csv(scores_csv)
        n_input = len(ratings_csv.read_text().splitlines())

        assert list(frame.columns) == ["user_token", "item_token", "rating", "timestamp", "fold", "score"]
        assert len(frame) == n_input
        assert (frame["score"] >= 0).all()
        sidecar = json.loads(scores_csv.with_name("scores.csv.run.json").read_bytes())
        assert sidecar["config"]["command"] == "score"
        assert sidecar["n_folds"] == 5

    def test_empty_input(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        assert main(["score", "--input", str(empty), *FAST]) == 3

    def test_missing_input(self, tmp_path):
        assert main(["score", "--input", str(tmp_path / "absent.csv"), *FAST]) == 3


class TestSelect:
    def test_full_rate_reproduces_input(self, ratings_csv, scores_csv, tmp_path):
        output = tmp_path / "subset.csv"

        code = main(["select", "--scores", str(scores_csv), "--strategy", "sc_low", "--rate", "1.0",
                     "--output", str(output)])

        assert code == 0
        selected = pd.read_csv(output)
        assert list(selected.columns) == ["user", "item", "rating", "timestamp"]
        original = pd.read_csv(ratings_csv, header=None, names=["user", "item", "rating", "timestamp"])
        assert _interaction_set(selected) == _interaction_set(original)
        assert output.with_name("subset.csv.run.json").exists()

    def test_unknown_strategy(self, scores_csv):
        assert main(["select", "--scores", str(scores_csv), "--strategy", "nearest", "--rate", "0.5"]) == 2

    def test_rate_files(self, scores_csv, tmp_path):
        output = tmp_path / "train.csv"

        code = main(["select", "--scores", str(scores_csv), "--strategy", "random", "--rates", "0.5,1.0",
                     "--output", str(output)])

        assert code == 0
        half = pd.read_csv(tmp_path / "train_random_50.csv")
        full = pd.read_csv(tmp_path / "train_random_100.csv")
        assert _interaction_set(half) <= _interaction_set(full)


def test_subsample_writes_samples(ratings_csv, tmp_path):
    out_dir = tmp_path / "samples"

    code = main(["subsample", "--input", str(ratings_csv), "--n-target", "200", "--samples", "2",
                 "--output-dir", str(out_dir)])

    assert code == 0
    for i in range(2):
        sample = pd.read_csv(out_dir / f"sample_{i}.csv")
        provenance = json.loads((out_dir / f"sample_{i}.provenance.json").read_bytes())
        assert len(sample) == provenance["provenance"]["n_output"] <= 200
        assert provenance["provenance"]["seed"] == i


def test_correlate_fixture(fixtures_dir, capsys):
    code = main(["correlate", "--input", str(fixtures_dir / "best_performance.csv"),
                 "--x", "RMSE", "--y", "MRR@10"])

    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["schema"] == "sc.correlation/1"
    assert payload["results"]["MRR@10"]["pearson_r"] == pytest.approx(-0.23098948, abs=1e-6)
    assert payload["results"]["MRR@10"]["n"] == 23
