import json
import shutil

import pandas as pd
import pytest
import yaml

from sgsynth import io
from sgsynth.database import REGISTRY_FILENAME, make_engine, registry_url, session_scope
from sgsynth.graphical_model import validate_network
from sgsynth.main import main
from sgsynth.repositories import RunRepository


@pytest.fixture
def write_config(tmp_path, data_dir):
    """Config file in tmp_path pointing at the bundled data; sections can be overridden."""

    def write(name="config.yaml", **overrides):
        data = {
            "seed": 5,
            "output_dir": str(tmp_path / "out"),
            "network": {
                "path": str(data_dir / "example_network.yaml"),
                "structure_path": str(data_dir / "example_structure.yaml"),
                "survey_path": str(data_dir / "survey.csv"),
                "method": "mle",
            },
            "population": {"n_agents": 8},
            "environment": {"n_questions": 3},
            "inference": {
                "mcmc": {"chains": 2, "draws": 40, "burn_in": 40, "adapt_window": 20},
                "histogram_parameters": ["alpha[1]", "beta[2]", "alpha[99]"],
            },
            "robustness": {
                "preset": "custom", "agent_counts": [4], "question_counts": [2], "repeats": 1,
                "mcmc": {"chains": 1, "draws": 30, "burn_in": 30, "adapt_window": 10},
            },
        }
        for key, value in overrides.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data))
        return path

    return write


def manifest(directory):
    return io.read_manifest(directory / "manifest.json")


class TestTrainBn:
    def test_mle(self, write_config, tmp_path):
        assert main(["train-bn", "--config", str(write_config())]) == 0
        net = io.load_network(tmp_path / "out" / "network" / "network.yaml")
        assert validate_network(net).ok
        report = json.loads((tmp_path / "out" / "network" / "fit_report.json").read_text())
        assert (report["method"], report["rows"], report["missing_cells"]) == ("mle", 665, 0)
        assert set(manifest(tmp_path / "out" / "network").artifacts) == {"network.yaml", "fit_report.json"}

    def test_em_with_missing_cells(self, write_config, tmp_path, data_dir):
        cfg = write_config(network={"survey_path": str(data_dir / "survey_missing.csv"), "method": "em", "max_iter": 20})
        assert main(["train-bn", "--config", str(cfg)]) == 0
        report = json.loads((tmp_path / "out" / "network" / "fit_report.json").read_text())
        assert report["missing_cells"] > 0

    def test_mle_with_missing_cells_is_a_data_error(self, write_config, data_dir):
        cfg = write_config(network={"survey_path": str(data_dir / "survey_missing.csv")})
        assert main(["train-bn", "--config", str(cfg)]) == 3

    def test_em_matches_mle_on_complete_data(self, write_config, tmp_path):
        main(["train-bn", "--config", str(write_config())])
        mle = io.load_network(tmp_path / "out" / "network" / "network.yaml")
        main(["train-bn", "--config", str(write_config(network={"method": "em", "max_iter": 3}))])
        em = io.load_network(tmp_path / "out" / "network" / "network.yaml")
        for name in mle.names:
            assert em.cpt(name).table == pytest.approx(mle.cpt(name).table, abs=1e-9)


class TestGenerate:
    def test_writes_the_dataset(self, write_config, tmp_path):
        assert main(["generate", "--config", str(write_config())]) == 0
        directory = tmp_path / "out" / "dataset"
        observable = pd.read_csv(directory / "observable.csv")
        assert list(observable.columns[:4]) == ["agent_id", "Q1", "Q2", "Q3"]
        assert len(observable) == 8
        for name in ("truth_agents.csv", "truth_questions.csv", "truth_hyperparams.csv", "population.csv", "alpha_histogram.csv"):
            assert name in manifest(directory).artifacts

    def test_same_seed_same_bytes(self, write_config, tmp_path):
        main(["generate", "--config", str(write_config("a.yaml", output_dir=str(tmp_path / "a")))])
        main(["generate", "--config", str(write_config("b.yaml", output_dir=str(tmp_path / "b")))])
        assert manifest(tmp_path / "a" / "dataset").artifacts == manifest(tmp_path / "b" / "dataset").artifacts

    def test_rerun_from_manifest(self, write_config, tmp_path):
        main(["generate", "--config", str(write_config())])
        first = manifest(tmp_path / "out" / "dataset").artifacts
        saved = tmp_path / "saved_manifest.json"
        shutil.copy(tmp_path / "out" / "dataset" / "manifest.json", saved)
        assert main(["generate", "--from-manifest", str(saved)]) == 0
        assert manifest(tmp_path / "out" / "dataset").artifacts == first

    def test_stratify(self, write_config, tmp_path):
        assert main(["generate", "--config", str(write_config()), "--stratify", "Gender=Female"]) == 0
        observable = pd.read_csv(tmp_path / "out" / "dataset" / "observable.csv")
        assert (observable["Gender"] == "Female").all()

    def test_stratified_rerun_from_manifest(self, write_config, tmp_path):
        main(["generate", "--config", str(write_config()), "--stratify", "Gender=Female"])
        first = manifest(tmp_path / "out" / "dataset")
        assert first.config["population"]["evidence"] == {"Gender": "Female"}
        saved = tmp_path / "saved_manifest.json"
        shutil.copy(tmp_path / "out" / "dataset" / "manifest.json", saved)
        main(["generate", "--config", str(write_config())])
        assert manifest(tmp_path / "out" / "dataset").artifacts != first.artifacts
        assert main(["generate", "--from-manifest", str(saved)]) == 0
        assert manifest(tmp_path / "out" / "dataset").artifacts == first.artifacts

    def test_bad_stratify_argument(self, write_config):
        assert main(["generate", "--config", str(write_config()), "--stratify", "Gender"]) == 2

    def test_zero_agents_is_a_config_error(self, write_config):
        assert main(["generate", "--config", str(write_config(population={"n_agents": 0}))]) == 2

    def test_missing_network_file(self, write_config, tmp_path):
        cfg = write_config(network={"path": str(tmp_path / "missing.yaml")})
        assert main(["generate", "--config", str(cfg)]) == 2


class TestInfer:
    def test_with_truth(self, write_config, tmp_path):
        cfg = str(write_config())
        main(["generate", "--config", cfg])
        assert main(["infer", "--config", cfg]) == 0
        directory = tmp_path / "out" / "inference"
        summary = pd.read_csv(directory / "summary.csv")
        assert len(summary) == 4 + 8 + 8 + 3
        rates = pd.read_csv(directory / "coverage_rates.csv")
        assert set(rates["family"]) == {"hyperparameters", "alpha", "beta"}
        assert (directory / "histograms" / "alpha_1.csv").exists()
        assert (directory / "histograms" / "beta_2.csv").exists()
        assert not (directory / "histograms" / "alpha_99.csv").exists()
        trace = pd.read_csv(directory / "trace.csv")
        assert len(trace) == 2 * 40
        sampler = pd.read_csv(directory / "sampler.csv").set_index("quantity")["value"]
        assert {"label_swap", "label_swap_chain_0", "label_swap_chain_1"} <= set(sampler.index)
        assert sampler["label_swap"] == max(sampler["label_swap_chain_0"], sampler["label_swap_chain_1"])

    def test_without_truth(self, write_config, tmp_path):
        cfg = str(write_config())
        main(["generate", "--config", cfg])
        lonely = tmp_path / "elsewhere" / "observable.csv"
        lonely.parent.mkdir()
        shutil.copy(tmp_path / "out" / "dataset" / "observable.csv", lonely)
        assert main(["infer", str(lonely), "--config", cfg]) == 0
        directory = tmp_path / "out" / "inference"
        assert (directory / "summary.csv").exists()
        assert not (directory / "coverage.csv").exists()

    def test_bad_response_cell(self, write_config, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("agent_id,Q1\n1,2\n")
        assert main(["infer", str(bad), "--config", str(write_config())]) == 3


class TestRobustnessAndReport:
    def test_single_cell_grid(self, write_config, tmp_path):
        assert main(["robustness", "--config", str(write_config())]) == 0
        agents, questions, matrix = io.read_heatmap(tmp_path / "out" / "robustness" / "alpha_entropy.csv")
        assert (agents, questions) == ([4], [2])
        assert 0.0 <= matrix[0, 0] <= 1.0

    def test_custom_preset_without_axes(self, write_config):
        cfg = write_config(robustness={"agent_counts": None})
        assert main(["robustness", "--config", str(cfg)]) == 2

    def test_report(self, write_config, tmp_path, capsys):
        cfg = str(write_config())
        main(["generate", "--config", cfg])
        main(["robustness", "--config", cfg])
        capsys.readouterr()
        assert main(["report", "--config", cfg]) == 0
        text = capsys.readouterr().out
        assert "run registry" in text
        assert "observable.csv" in text and "MODIFIED" not in text
        assert (tmp_path / "out" / "report.txt").read_text() == text

    def test_report_flags_modified_files(self, write_config, tmp_path, capsys):
        main(["generate", "--config", str(write_config())])
        with open(tmp_path / "out" / "dataset" / "observable.csv", "a") as f:
            f.write("tampered\n")
        assert main(["report", "--output-dir", str(tmp_path / "out")]) == 0
        assert "MODIFIED OR MISSING" in capsys.readouterr().out

    def test_registry_records_every_run(self, write_config, tmp_path, data_dir):
        cfg = str(write_config())
        main(["generate", "--config", cfg])
        main(["generate", "--config", str(write_config(population={"target": "Nope"}))])
        engine = make_engine(registry_url(tmp_path / "out"))
        with session_scope(engine) as db:
            runs = RunRepository(db).list_recent()
            assert sorted((r.status, r.exit_code) for r in runs) == [("failed", 3), ("ok", 0)]
        engine.dispose()
        assert (tmp_path / "out" / REGISTRY_FILENAME).exists()


def test_make_survey(write_config, tmp_path, example_net):
    assert main(["make-survey", "--config", str(write_config()), "--rows", "25", "--missing-fraction", "0.2"]) == 0
    survey = io.read_survey(tmp_path / "out" / "survey" / "survey.csv", example_net.dag)
    assert survey.shape == (25, len(example_net.names))


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "sgsynth" in capsys.readouterr().out
