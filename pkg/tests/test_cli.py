import json

import numpy as np
import pytest

from gbdt_ohe import GbdtModel, synth_square
from gbdt_ohe.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main
from gbdt_ohe.data import save_csv
from gbdt_ohe.encode import read_matrix_market

SMALL_CONFIG = {
    "dataset": {"synthetic": "square", "n": 300, "seed": 1},
    "gbdt": {"n_estimators": 12, "learning_rate": 0.3, "tree": {"max_depth": 3}},
    "gbdt_reg": {"n_estimators": 12, "learning_rate": 0.3, "tree": {"max_depth": 3, "reg_alpha": 0.5}},
    "refits": [{"name": "R", "method": "ridge", "value": 3.0},
               {"name": "L", "method": "lasso", "value": 1e-3, "scale": "per_sample"}],
    "perturbations": [0.0, 0.05],
    "repeats": 2,
    "bootstrap_B": 3,
}


@pytest.fixture
def files(tmp_path):
    save_csv(synth_square(150, 0), tmp_path / "train.csv")
    save_csv(synth_square(60, 1), tmp_path / "test.csv")
    (tmp_path / "cfg.json").write_text(json.dumps({**SMALL_CONFIG, "output_dir": str(tmp_path / "res")}))
    return tmp_path


def train(files, *extra):
    return main(["train", "--data", str(files / "train.csv"), "--target", "y", "--n-estimators", "10",
                 "--max-depth", "3", "--learning-rate", "0.3", "--out", str(files / "m.json"), *extra])


def test_train_encode_refit_evaluate(files):
    assert train(files) == EXIT_OK
    model = GbdtModel.load(files / "m.json")
    assert model.n_trees == 10

    assert main(["encode", "--model", str(files / "m.json"), "--data", str(files / "train.csv"), "--target", "y",
                 "--rows", str(files / "test.csv"), "--out-dir", str(files / "enc")]) == EXIT_OK
    design = read_matrix_market(files / "enc" / "design.mtx")
    assert design.shape[0] == 150
    assert read_matrix_market(files / "enc" / "design_rows.mtx").shape == (60, design.shape[1])
    coef = json.loads((files / "enc" / "coef_original.json").read_text())
    assert coef["method"] == "original" and coef["n_columns"] == design.shape[1]

    assert main(["refit", "--model", str(files / "m.json"), "--data", str(files / "train.csv"), "--target", "y",
                 "--method", "lasso", "--alpha", "0.01", "--out", str(files / "coef.json")]) == EXIT_OK
    res = json.loads((files / "coef.json").read_text())
    assert res["converged"] and res["lambda"] == pytest.approx(2 * 150 * 0.01)

    assert main(["evaluate", "--model", str(files / "m.json"), "--coef", str(files / "coef.json"),
                 "--data", str(files / "test.csv"), "--train", str(files / "train.csv"), "--target", "y",
                 "--perturb", "0,0.05", "--repeats", "2", "--out", str(files / "eval.csv")]) == EXIT_OK
    lines = (files / "eval.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[1].split(",")[3] == "0.0"


def test_refit_nonconvergence_exits_3(files):
    train(files)
    code = main(["refit", "--model", str(files / "m.json"), "--data", str(files / "train.csv"), "--target", "y",
                 "--method", "lasso", "--lambda", "0.01", "--solver", "cd", "--max-sweeps", "1", "--tol", "1e-15"])
    assert code == EXIT_NUMERICAL


@pytest.mark.parametrize("argv", [
    [],
    ["nonsense"],
    ["train", "--data", "missing.csv", "--target", "y", "--out", "m.json"],
    ["refit", "--model", "missing.json", "--data", "x.csv", "--target", "y", "--method", "ridge", "--lambda", "1"],
    ["reproduce"],
    ["reproduce", "--preset", "iris"],
    ["sweep", "--preset", "airfoil", "--kind", "lambda"],
    ["evaluate", "--model", "m.json", "--data", "d.csv", "--target", "y", "--train", "t.csv", "--perturb", "a,b"],
])
def test_invalid_input_exits_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_INVALID


def test_bad_target_exits_2(files):
    assert main(["train", "--data", str(files / "train.csv"), "--target", "zz", "--out", str(files / "m.json")]) == 2


def test_refit_needs_one_penalty(files):
    train(files)
    base = ["refit", "--model", str(files / "m.json"), "--data", str(files / "train.csv"), "--target", "y",
            "--method", "ridge"]
    assert main(base) == EXIT_INVALID
    assert main(base + ["--lambda", "1", "--alpha", "1"]) == EXIT_INVALID


def test_verify_theorem1_cli(tmp_path):
    out = tmp_path / "t1.json"
    assert main(["verify-theorem1", "--trials", "3", "--samples", "200", "--out", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["trials"] == 3 and rep["failures"] == [] and "max_identity_residual" in rep


def test_decompose_cli(files):
    out = files / "dec.json"
    assert main(["decompose", "--config", str(files / "cfg.json"), "--model-name", "R", "--sigma", "0.05",
                 "--out", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["model"] == "R" and rep["bootstrap_B"] == 3
    assert rep["direct_risk"] == pytest.approx(rep["bias_sq_plus_irreducible"] + rep["variance"]
                                               + rep["perturbation"] + rep["sum_gap"])
    assert main(["decompose", "--config", str(files / "cfg.json"), "--model-name", "nope"]) == EXIT_INVALID


def test_sweep_cli(files, capsys):
    assert main(["sweep", "--config", str(files / "cfg.json"), "--rounds", "0,4,12", "--stack"]) == EXIT_OK
    path = capsys.readouterr().out.strip()
    lines = open(path).read().splitlines()
    assert lines[0].startswith("n_estimators,") and [ln.split(",")[0] for ln in lines[1:]] == ["0", "4", "12"]
    assert (files / "res" / "complexity_sweep_stack.csv").is_file()
    assert main(["sweep", "--config", str(files / "cfg.json"), "--kind", "lambda", "--lambdas", "1,10",
                 "--out", str(files / "lam.csv")]) == EXIT_OK
    assert (files / "lam.csv").read_text().startswith("lambda,")


def test_reproduce_is_byte_identical(files):
    a, b = files / "a", files / "b"
    assert main(["reproduce", "--config", str(files / "cfg.json"), "--out-dir", str(a)]) == EXIT_OK
    assert main(["reproduce", "--config", str(files / "cfg.json"), "--out-dir", str(b)]) == EXIT_OK
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "design.mtx").read_bytes() == (b / "design.mtx").read_bytes()
    np.testing.assert_array_equal(np.loadtxt(a / "results.csv", delimiter=",", skiprows=1, usecols=(1, 2, 3)),
                                  np.loadtxt(b / "results.csv", delimiter=",", skiprows=1, usecols=(1, 2, 3)))


def test_reproduce_strict_flags_unconverged(files):
    cfg = json.loads((files / "cfg.json").read_text())
    cfg.update(refit_max_sweeps=1, refit_tol=1e-15)
    (files / "strict.json").write_text(json.dumps(cfg))
    assert main(["reproduce", "--config", str(files / "strict.json")]) == EXIT_OK
    assert main(["reproduce", "--config", str(files / "strict.json"), "--strict"]) == EXIT_NUMERICAL
    assert ",0\n" in (files / "res" / "results.csv").read_text()
