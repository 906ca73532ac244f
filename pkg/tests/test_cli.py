import csv
import json

import numpy as np
import pytest

from procdmn.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from procdmn.datagen import online_constants
from procdmn.mandel import mandel_to_tensor_components, tensor_to_mandel_components
from procdmn.network import compress, extract_volume_fraction, load, save, serialize
from procdmn.online import DmnMaterialPoint, LeafMaterials, LoadPath, write_path_csv
from procdmn.training import init_random


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def gen(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert _run("gen-data", "--out", out, "--layers", 3, "--vf", 0.2,
                "--n-train", 30, "--n-test", 10, "--seed", 4) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def db_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("db")
    assert _run("build-db", "--synthetic-layers", 3, "--out", out) == EXIT_OK
    return out


def test_gen_data_default_sizes(tmp_path):
    out = tmp_path / "new" / "dir"          # created on demand
    assert _run("gen-data", "--out", out) == EXIT_OK
    with open(out / "train.csv") as fh:
        assert sum(1 for _ in fh) == 401
    with open(out / "test.csv") as fh:
        assert sum(1 for _ in fh) == 101
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 0 and len(man["config_sha256"]) == 64
    assert set(man["outputs"]) == {"train.csv", "test.csv", "teacher.json"}
    assert "numpy" in man["versions"]


def test_gen_data_is_byte_identical(tmp_path, gen):
    assert _run("gen-data", "--out", tmp_path, "--layers", 3, "--vf", 0.2,
                "--n-train", 30, "--n-test", 10, "--seed", 4) == EXIT_OK
    for name in ("train.csv", "test.csv", "teacher.json"):
        assert (tmp_path / name).read_bytes() == (gen / name).read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"gen-data": {"n_train": 12, "n_test": 3, "layers": 2}}))
    assert _run("gen-data", "--config", cfg, "--n-test", 5, "--out", tmp_path) == EXIT_OK
    with open(tmp_path / "train.csv") as fh:
        assert sum(1 for _ in fh) == 13
    with open(tmp_path / "test.csv") as fh:
        assert sum(1 for _ in fh) == 6


def test_config_errors(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert _run("gen-data", "--config", cfg, "--out", tmp_path) == EXIT_CONFIG
    cfg.write_text("{ not json")
    assert _run("gen-data", "--config", cfg, "--out", tmp_path) == EXIT_CONFIG
    assert _run("train", "--out", tmp_path) == EXIT_CONFIG        # --train missing


def test_train_zero_epochs(tmp_path, gen, capsys):
    assert _run("train", "--train", gen / "train.csv", "--test", gen / "test.csv",
                "--layers", 3, "--epochs", 0, "--seed", 2, "--out", tmp_path) == EXIT_OK
    assert serialize(load(tmp_path / "model.json")) == serialize(init_random(3, seed=2))
    assert (tmp_path / "history.csv").read_text().splitlines() == [
        "epoch,train_error,test_error,seconds"]
    assert "no epochs" in capsys.readouterr().out


def test_train_prints_summary_and_is_reproducible(tmp_path, gen, capsys):
    args = ["train", "--train", gen / "train.csv", "--test", gen / "test.csv", "--layers", 3,
            "--epochs", 5, "--mini-batches", 3, "--threads", 1]
    assert _run(*args, "--out", tmp_path / "a") == EXIT_OK
    out = capsys.readouterr().out
    assert "train error" in out and "volume fraction" in out
    assert _run(*args, "--out", tmp_path / "b") == EXIT_OK
    assert (tmp_path / "a" / "model.json").read_bytes() == (tmp_path / "b" / "model.json").read_bytes()


def test_transfer(tmp_path, gen):
    assert _run("transfer", "--train", gen / "train.csv", "--source", gen / "teacher.json",
                "--epochs", 0, "--out", tmp_path) == EXIT_OK
    assert np.array_equal(load(tmp_path / "model.json").flat(), load(gen / "teacher.json").flat())
    assert _run("transfer", "--train", gen / "train.csv", "--out", tmp_path) == EXIT_CONFIG


def test_transfer_layer_mismatch_is_data_error(tmp_path, gen, caplog):
    assert _run("transfer", "--train", gen / "train.csv", "--source", gen / "teacher.json",
                "--layers", 4, "--out", tmp_path) == EXIT_DATA
    assert "3-layer network into a 4-layer" in caplog.text
    bad = tmp_path / "bad.csv"
    bad.write_text("x\n")
    assert _run("transfer", "--train", bad, "--source", gen / "teacher.json",
                "--out", tmp_path) == EXIT_DATA


def test_missing_file_is_io_error(tmp_path):
    assert _run("inspect", "--model", tmp_path / "nope.json", "--out", tmp_path) == 5


def test_build_db_and_query_at_anchor(tmp_path, db_dir):
    from procdmn.database import load_db

    db = load_db(db_dir / "database.json")
    assert _run("query", "--db", db_dir / "database.json", "--vf", 0.1, "--a11", 1.0,
                "--a22", 0.0, "--out", tmp_path) == EXIT_OK
    q = load(tmp_path / "model.json")
    ref = db.models[2]
    assert np.array_equal(q.z, ref.z) and np.array_equal(q.angles, ref.angles)


def test_query_outside_hull(tmp_path, db_dir):
    assert _run("query", "--db", db_dir / "database.json", "--vf", 0.5, "--a11", 1.0,
                "--a22", 0.0, "--out", tmp_path) == EXIT_DATA
    assert _run("query", "--db", db_dir / "database.json", "--vf", 0.5, "--a11", 1.0,
                "--a22", 0.0, "--allow-extrapolation", "--out", tmp_path) == EXIT_OK


def test_query_with_tensor(tmp_path, db_dir):
    A = np.diag([0.7, 0.2, 0.1])   # near the anchor centroid
    assert _run("query", "--db", db_dir / "database.json", "--vf", 0.15,
                "--tensor", *A.ravel(), "--out", tmp_path) == EXIT_OK
    assert "rotation" in load(tmp_path / "model.json").metadata


def test_build_db_anchor_count(tmp_path, gen):
    m = gen / "teacher.json"
    assert _run("build-db", "--anchor", f"0.1,0.5,0.5={m}", "--out", tmp_path) == EXIT_CONFIG


def test_build_db_from_model_files(tmp_path):
    from procdmn.datagen import synthetic_family

    fam = synthetic_family(3, seed=1)
    args = []
    for k, d in enumerate([(0.1, 1 / 3, 1 / 3), (0.1, 0.5, 0.5), (0.1, 1.0, 0.0), (0.3, 1.0, 0.0)]):
        save(fam(*d), tmp_path / f"m{k}.json")
        args += ["--anchor", f"{d[0]!r},{d[1]!r},{d[2]!r}={tmp_path / f'm{k}.json'}"]
    assert _run("build-db", *args, "--out", tmp_path) == EXIT_OK


def test_predict_elastic_path_matches_linear_response(tmp_path, constants):
    p = init_random(3, seed=5)
    save(p, tmp_path / "m.json")
    eps = np.array([1e-5, -2e-6, 3e-6, 1e-6, 0.0, -1e-6])
    path = LoadPath(np.zeros((3, 6), dtype=bool), np.outer([1.0, 2.0, 3.0], eps))
    write_path_csv(path, tmp_path / "path.csv")
    assert _run("predict", "--model", tmp_path / "m.json", "--path", tmp_path / "path.csv",
                "--out", tmp_path) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "response.csv")))
    mat = LeafMaterials(constants.C_fiber, constants.C_matrix, constants.hardening)
    C = DmnMaterialPoint(p, mat).elastic_stiffness()[0]
    comps = ["11", "22", "33", "23", "13", "12"]
    for k, r in enumerate(rows):
        sig = np.array([float(r[f"sig_{c}"]) for c in comps])
        ref = mandel_to_tensor_components(C @ tensor_to_mandel_components((k + 1) * eps))
        assert np.allclose(sig, ref, rtol=1e-10, atol=1e-14)
        assert float(r["ep_bar_weighted"]) == 0.0


def test_predict_random_path_is_sigma33_free(tmp_path):
    save(init_random(3, seed=6), tmp_path / "m.json")
    assert _run("predict", "--model", tmp_path / "m.json", "--random-steps", 6,
                "--out", tmp_path) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "response.csv")))
    assert len(rows) == 6
    s = np.array([[float(r[f"sig_{c}"]) for c in ("11", "22", "33")] for r in rows])
    assert np.all(np.abs(s[:, 2]) <= 1e-8 * np.abs(s).max(axis=1))


def test_predict_empty_path(tmp_path):
    save(init_random(3, seed=6), tmp_path / "m.json")
    (tmp_path / "empty.csv").write_text("")
    assert _run("predict", "--model", tmp_path / "m.json", "--path", tmp_path / "empty.csv",
                "--out", tmp_path) == EXIT_DATA


def test_simulate_end_to_end(tmp_path, db_dir):
    cfg = {"simulate": {"mesh": {"shape": [2, 1, 1], "size": [0.02, 0.01, 0.01],
                                 "density": 1500.0},
                        "descriptor": [0.15, 0.7, 0.2],
                        "bcs": [{"set": "x0", "component": 0, "velocity": 0.0},
                                {"set": "x1", "component": 0, "velocity": 1.0}],
                        "end_time": 5e-6, "output_every": 5}}
    (tmp_path / "sim.json").write_text(json.dumps(cfg))
    args = ["simulate", "--config", tmp_path / "sim.json", "--db", db_dir / "database.json",
            "--threads", 1]
    assert _run(*args, "--out", tmp_path / "a") == EXIT_OK
    hist = (tmp_path / "a" / "history.csv").read_text().splitlines()
    assert hist[0].startswith("time,x0_Fx")
    assert sorted(p.name for p in (tmp_path / "a").glob("*.vtk"))[0] == "fields_000000.vtk"
    assert _run(*args, "--out", tmp_path / "b") == EXIT_OK
    assert (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()
    cfg["simulate"]["bcs"][0]["set"] = "nowhere"
    (tmp_path / "sim.json").write_text(json.dumps(cfg))
    assert _run(*args, "--out", tmp_path / "c") == EXIT_CONFIG


def test_inspect_counts(tmp_path, capsys):
    p = init_random(8, seed=0)
    save(p, tmp_path / "m.json")
    assert _run("inspect", "--model", tmp_path / "m.json", "--weights-csv", "w.csv",
                "--out", tmp_path) == EXIT_OK
    out = capsys.readouterr().out
    assert "active DOFs: 128" in out
    assert f"inferred volume fraction: {extract_volume_fraction(p):.4f}" in out
    with open(tmp_path / "w.csv") as fh:
        assert sum(1 for _ in fh) == 1 + 255

    z = p.z.copy()
    z[:40] = -1.0
    c = compress(p.replace(z=z))
    save(c, tmp_path / "c.json")
    assert _run("inspect", "--model", tmp_path / "c.json", "--out", tmp_path) == EXIT_OK
    from procdmn.network import network_stats
    assert f"active DOFs: {network_stats(c).active_dofs}" in capsys.readouterr().out


def test_constants_fixture_matches_cli_default(constants):
    assert online_constants().fiber == constants.fiber
