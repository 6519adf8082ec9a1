import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ispca import cli, io
from ispca.errors import DataError, UsageError
from ispca.model import IsPcaModel, scores


def write(path, text):
    path.write_text(text)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def data(fixtures_dir):
    return fixtures_dir / "three_blocks.csv"


class TestReadCsv:
    def test_header_and_centering(self, tmp_path):
        X = io.read_matrix_csv(write(tmp_path / "a.csv", "a,b\n1,2\n3,6\n"), has_header=True)
        assert X.col_labels == ("a", "b")
        assert X.values.tolist() == [[-1.0, -2.0], [1.0, 2.0]]
        assert X.means.tolist() == [2.0, 4.0]

    def test_no_center_and_delimiter(self, tmp_path):
        X = io.read_matrix_csv(write(tmp_path / "a.tsv", "1\t2\n3\t4\n"), delimiter="\t",
                               center=False)
        assert X.values.tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_transpose(self, tmp_path):
        X = io.read_matrix_csv(write(tmp_path / "a.csv", "1,2,3\n4,5,6\n"), transpose=True,
                               center=False)
        assert X.shape == (3, 2)

    def test_log2(self, tmp_path):
        X = io.read_matrix_csv(write(tmp_path / "a.csv", "1,8\n4,2\n"), log2=True, center=False)
        assert X.values.tolist() == [[0.0, 3.0], [2.0, 1.0]]

    @pytest.mark.parametrize("text, where", [
        ("1,2\n3\n", "row 2"),
        ("1,2\n3,x\n", "row 2, column 2"),
        ("1,2\nnan,4\n", "row 2, column 1"),
        ("", "empty"),
        ("5,6\n", "at least 2"),
    ])
    def test_data_errors(self, tmp_path, text, where):
        with pytest.raises(DataError, match=where):
            io.read_matrix_csv(write(tmp_path / "a.csv", text))

    def test_log2_needs_positive(self, tmp_path):
        with pytest.raises(DataError, match="row 3, column 1"):
            io.read_matrix_csv(write(tmp_path / "a.csv", "h\n1\n0\n"), has_header=True, log2=True)

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError):
            io.read_matrix_csv(tmp_path / "nope.csv")

    def test_labels_length_checked(self, tmp_path):
        with pytest.raises(DataError):
            io.read_labels(write(tmp_path / "l.txt", "a\nb\n"), n=3)


class TestStaging:
    def test_failure_leaves_nothing(self, tmp_path):
        with pytest.raises(RuntimeError):
            with io.staged_outputs(tmp_path / "out") as d:
                io.write_json(d / "x.json", {"a": 1})
                raise RuntimeError
        assert list((tmp_path / "out").iterdir()) == []


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestIspcaCommand:
    def test_outputs(self, data, tmp_path):
        out = tmp_path / "out"
        assert run("ispca", "--input", data, "--header", "--detector", "threshold", "--k", 3,
                   "--output-dir", out, "--min-share", 0.2, "--compare-dense") == 0
        part = json.loads((out / "partition.json").read_text())
        assert part["b"] == 3 and part["sizes"] == [4, 4, 4]
        assert part["block_labels"][0] == ["g1", "g2", "g3", "g4"]
        model = json.loads((out / "model.json").read_text())
        assert model["k"] == 3
        sc = read_rows(out / "scores.csv")
        assert sc[0] == ["observation", "PC1", "PC2", "PC3"] and len(sc) == 41
        ld = read_rows(out / "loadings.csv")
        assert ld[0] == ["row", "component", "value", "label"]
        assert {r[1] for r in ld[1:]} == {"1", "2", "3"}
        assert len(ld) == 13  # one entry per variable: every block contributes one component
        var = json.loads((out / "variance.json").read_text())
        assert [c["component"] for c in var["components"]] == [1, 2, 3]
        assert sorted(var["selected_blocks"]) == [0, 1, 2]
        corr = np.loadtxt(out / "loading_correlations.csv", delimiter=",", skiprows=1)
        assert corr.shape == (3, 3)
        assert not (out / "error.json").exists()

    def test_blocks_file_bypasses_detection(self, data, tmp_path):
        blocks = write(tmp_path / "b.json", json.dumps({"p": 12, "blocks": [list(range(6)),
                                                                             list(range(6, 12))]}))
        out = tmp_path / "out"
        assert run("ispca", "--input", data, "--header", "--blocks-file", blocks, "--k", 2,
                   "--output-dir", out) == 0
        assert json.loads((out / "partition.json").read_text())["sizes"] == [6, 6]

    def test_config_file_and_flag_precedence(self, data, tmp_path):
        cfg = write(tmp_path / "c.json", json.dumps({"k": 1, "detector": "threshold",
                                                     "header": True}))
        out = tmp_path / "out"
        assert run("ispca", "--input", data, "--config", cfg, "--k", 2, "--output-dir", out) == 0
        assert json.loads((out / "model.json").read_text())["k"] == 2

    def test_model_reuse_gives_same_scores(self, data, tmp_path):
        out = tmp_path / "out"
        run("ispca", "--input", data, "--header", "--detector", "threshold", "--k", 3,
            "--output-dir", out)
        model = IsPcaModel.from_dict(json.loads((out / "model.json").read_text()))
        X = io.read_matrix_csv(data, has_header=True)
        Z = np.loadtxt(out / "scores.csv", delimiter=",", skiprows=1)[:, 1:]
        assert np.array_equal(Z, scores(model, X))
        bp = tmp_path / "bp"
        assert run("biplot-data", "--input", data, "--header", "--model", out / "model.json",
                   "--components", "1,3", "--output-dir", bp) == 0
        rows = np.loadtxt(bp / "biplot_1_3.csv", delimiter=",", skiprows=1)
        assert np.array_equal(rows[:, 1], Z[:, 0]) and np.array_equal(rows[:, 2], Z[:, 2])


class TestOtherCommands:
    def test_detect(self, data, tmp_path):
        assert run("detect", "--input", data, "--header", "--detector", "threshold",
                   "--output-dir", tmp_path) == 0
        doc = json.loads((tmp_path / "partition.json").read_text())
        assert doc["blocks"] == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11]]

    def test_pla(self, data, tmp_path):
        assert run("pla", "--input", data, "--header", "--detector", "threshold",
                   "--min-share", 0.5, "--output-dir", tmp_path) == 0
        doc = json.loads((tmp_path / "variance.json").read_text())
        assert sum(b["share"] for b in doc["blocks"]) == pytest.approx(1.0)
        assert doc["selected_blocks"] == []

    def test_biplot_labels(self, data, tmp_path):
        labels = write(tmp_path / "labels.txt", "".join(f"grp{i % 2}\n" for i in range(40)))
        out = tmp_path / "out"
        assert run("biplot-data", "--input", data, "--header", "--detector", "threshold",
                   "--k", 2, "--labels", labels, "--output-dir", out) == 0
        rows = read_rows(out / "biplot_1_2.csv")
        assert rows[0] == ["observation", "score_1", "score_2", "group"]
        assert len(rows) == 41 and rows[2][3] == "grp1"

    def test_simulate_schema(self, tmp_path):
        cfg = write(tmp_path / "c.json", json.dumps(
            {"sim": {"n": 16, "p": 24, "b": 2, "replicates": 2}}))
        assert run("simulate", "--config", cfg, "--seed", 3, "--output-dir", tmp_path) == 0
        rows = read_rows(tmp_path / "sim_results.csv")
        assert rows[0] == ["replicate", "approach", "block", "omega", "cosine", "ratio"]
        summary = json.loads((tmp_path / "sim_summary.json").read_text())
        assert summary["config"]["seed"] == 3
        assert set(summary["aggregates"]) == {"CDM", "OracleIsPca", "FalseNegIsPca",
                                              "PmdIsPca", "Pmd"}


class TestErrors:
    def test_usage_error_exit_code(self, data, tmp_path, capsys):
        out = tmp_path / "out"
        assert run("ispca", "--input", data, "--header", "--output-dir", out) == 2  # no --k
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["exit_code"] == 2
        assert sorted(p.name for p in out.iterdir()) == ["error.json"]

    def test_data_error_exit_code(self, tmp_path):
        bad = write(tmp_path / "bad.csv", "1,2\n3\n")
        out = tmp_path / "out"
        assert run("detect", "--input", bad, "--output-dir", out) == 3
        assert sorted(p.name for p in out.iterdir()) == ["error.json"]

    def test_error_json_cleared_on_success(self, data, tmp_path):
        out = tmp_path / "out"
        run("detect", "--input", tmp_path / "missing.csv", "--output-dir", out)
        assert (out / "error.json").exists()
        assert run("detect", "--input", data, "--header", "--output-dir", out) == 0
        assert not (out / "error.json").exists()

    def test_bad_component_pair(self, data, tmp_path):
        assert run("biplot-data", "--input", data, "--header", "--k", 2, "--detector",
                   "threshold", "--components", "1,5", "--output-dir", tmp_path) == 2

    def test_unknown_config_key(self, data, tmp_path):
        cfg = write(tmp_path / "c.json", json.dumps({"bogus": 1}))
        assert run("detect", "--input", data, "--config", cfg, "--output-dir", tmp_path) == 2

    def test_console_script_exit_code(self, tmp_path):
        res = subprocess.run([sys.executable, "-m", "ispca.cli", "detect", "--input",
                              str(tmp_path / "none.csv"), "--output-dir", str(tmp_path)],
                             capture_output=True, text=True)
        assert res.returncode == 2


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def cli_run(args, threads):
    env = dict(os.environ, ISPCA_THREADS=str(threads))
    res = subprocess.run([sys.executable, "-m", "ispca.cli", *map(str, args)], env=env,
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr


def test_reruns_are_byte_identical(data, tmp_path):
    cfg = write(tmp_path / "c.json", json.dumps({"sim": {"n": 16, "p": 24, "b": 2,
                                                         "replicates": 3}}))
    snaps = []
    for i, threads in enumerate((1, 1, 4)):
        sim = tmp_path / f"sim{i}"
        fit = tmp_path / f"fit{i}"
        cli_run(["simulate", "--config", cfg, "--seed", 11, "--output-dir", sim], threads)
        cli_run(["ispca", "--input", data, "--header", "--k", 3, "--svd", "cdm",
                 "--output-dir", fit], threads)
        snaps.append((snapshot(sim), snapshot(fit)))
    assert snaps[0] == snaps[1] == snaps[2]
