"""Command-line entry point: ``procdmn <subcommand> [options]``.

Parameters come from built-in defaults, then an optional JSON ``--config``
file, then explicit flags. Every run writes ``manifest.json`` next to its
outputs. Logs go to stderr.

Exit codes: 0 success, 2 configuration, 3 data, 4 solver, 5 I/O.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time

import numpy as np

from . import __version__

log = logging.getLogger("procdmn")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4, 5


class ConfigError(ValueError):
    pass


def _available_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


DEFAULTS = {
    "gen-data": {"layers": 4, "vf": 0.10, "teacher_seed": None, "n_train": 400, "n_test": 100,
                 "modulus_ratio": [1.0, 1000.0]},
    "train": {"train": None, "test": None, "layers": 4, "epochs": 10000, "learning_rate": 1e-3,
              "optimizer": "adam", "mini_batches": 20, "early_stop": False},
    "transfer": {"train": None, "test": None, "source": None, "layers": None, "epochs": 10000,
                 "learning_rate": 1e-3, "optimizer": "adam", "mini_batches": 20,
                 "early_stop": False},
    "build-db": {"anchors": None, "synthetic_layers": None},
    "query": {"db": None, "vf": None, "a11": None, "a22": None, "tensor": None,
              "allow_extrapolation": False},
    "predict": {"model": None, "path": None, "random_steps": 20, "max_strain": 0.02,
                "constants": None, "rotation": None},
    "simulate": {"db": None, "field": None, "descriptor": None, "quaternion": [1.0, 0, 0, 0],
                 "mesh": {"shape": [8, 8, 8], "size": [0.08, 0.08, 0.08], "density": 1500.0},
                 "bcs": [], "end_time": None, "safety": 0.5, "output_every": 0,
                 "constants": None, "allow_extrapolation": False},
    "inspect": {"model": None, "weights_csv": None},
}

REQUIRED = {
    "train": ["train"], "transfer": ["train", "source"], "query": ["db"],
    "predict": ["model"], "simulate": ["db", "end_time"], "inspect": ["model"],
}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="global random seed (default 0)")
    common.add_argument("--threads", type=int, default=None, help="worker threads")
    common.add_argument("--out", default=None, help="output directory (default: out)")
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="procdmn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("gen-data", parents=[common], help="teacher-network training data")
    p.add_argument("--layers", type=int, default=S)
    p.add_argument("--vf", type=float, default=S, help="teacher volume fraction")
    p.add_argument("--teacher-seed", dest="teacher_seed", type=int, default=S)
    p.add_argument("--n-train", dest="n_train", type=int, default=S)
    p.add_argument("--n-test", dest="n_test", type=int, default=S)

    for name in ("train", "transfer"):
        p = sub.add_parser(name, parents=[common],
                           help="fit a network" if name == "train" else "fit from a pretrained network")
        p.add_argument("--train", default=S, help="training dataset CSV")
        p.add_argument("--test", default=S, help="test dataset CSV")
        p.add_argument("--layers", type=int, default=S,
                       help=None if name == "train" else "expected layer count of the source")
        if name == "transfer":
            p.add_argument("--source", default=S, help="pretrained model JSON")
        p.add_argument("--epochs", type=int, default=S)
        p.add_argument("--learning-rate", dest="learning_rate", type=float, default=S)
        p.add_argument("--optimizer", choices=["adam", "sgd"], default=S)
        p.add_argument("--mini-batches", dest="mini_batches", type=int, default=S)
        p.add_argument("--early-stop", dest="early_stop", action="store_true", default=S)

    p = sub.add_parser("build-db", parents=[common], help="fit the anchor database")
    p.add_argument("--anchor", dest="anchors", action="append", default=S,
                   metavar="VF,A11,A22=MODEL", help="anchor descriptor and model file (4 times)")
    p.add_argument("--synthetic-layers", dest="synthetic_layers", type=int, default=S,
                   help="use the built-in synthetic family at the four default anchors")

    p = sub.add_parser("query", parents=[common], help="interpolate a network")
    p.add_argument("--db", default=S)
    p.add_argument("--vf", type=float, default=S)
    p.add_argument("--a11", type=float, default=S)
    p.add_argument("--a22", type=float, default=S)
    p.add_argument("--tensor", type=float, nargs=9, default=S, help="orientation tensor, row-major")
    p.add_argument("--allow-extrapolation", dest="allow_extrapolation", action="store_true",
                   default=S)

    p = sub.add_parser("predict", parents=[common], help="stress-strain response along a path")
    p.add_argument("--model", default=S)
    p.add_argument("--path", default=S, help="path CSV; random sigma33-free path if omitted")
    p.add_argument("--random-steps", dest="random_steps", type=int, default=S)
    p.add_argument("--max-strain", dest="max_strain", type=float, default=S)
    p.add_argument("--constants", default=S, help="material constants JSON")

    p = sub.add_parser("simulate", parents=[common], help="explicit multiscale simulation")
    p.add_argument("--db", default=S)
    p.add_argument("--field", default=S, help="descriptor field CSV")
    p.add_argument("--end-time", dest="end_time", type=float, default=S)
    p.add_argument("--safety", type=float, default=S)
    p.add_argument("--output-every", dest="output_every", type=int, default=S)

    p = sub.add_parser("inspect", parents=[common], help="network statistics")
    p.add_argument("--model", default=S)
    p.add_argument("--weights-csv", dest="weights_csv", default=S)
    return ap


def resolve_config(args: argparse.Namespace) -> dict:
    cmd = args.command
    cfg = json.loads(json.dumps(DEFAULTS[cmd]))
    common = {"seed": 0, "out": "out",
              "threads": _available_threads() if cmd in ("simulate", "train", "transfer") else 1}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{args.config}: top level must be an object")
        section = doc.get(cmd, doc)
        for k, v in section.items():
            if k in common:
                common[k] = v
            elif k in cfg:
                cfg[k] = v
            elif k not in DEFAULTS:
                raise ConfigError(f"{args.config}: {cmd}.{k}: unknown parameter")
    for k, v in vars(args).items():
        if k in ("command", "config", "verbose"):
            continue
        if k in common:
            if v is not None:
                common[k] = v
        else:
            cfg[k] = v
    for k in REQUIRED.get(cmd, []):
        if cfg.get(k) is None:
            raise ConfigError(f"{cmd}.{k}: required parameter is missing")
    if not isinstance(common["threads"], int) or common["threads"] < 1:
        raise ConfigError(f"{cmd}.threads: must be a positive integer")
    cfg.update(common)
    return cfg


def write_manifest(cmd: str, cfg: dict, outputs: list[str], extra: dict | None = None) -> None:
    import scipy

    blob = json.dumps(cfg, sort_keys=True, default=str)
    doc = {
        "command": cmd,
        "config": json.loads(blob),
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": cfg["seed"],
        "versions": {"procdmn": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    with open(os.path.join(cfg["out"], "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=1)


def _out(cfg, name) -> str:
    return os.path.join(cfg["out"], name)


def _materials(path):
    from .datagen import online_constants
    from .online import LeafMaterials

    oc = online_constants(path)
    return LeafMaterials(oc.C_fiber, oc.C_matrix, oc.hardening)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------
def cmd_gen_data(cfg) -> list[str]:
    from .datagen import PhaseSampler, make_teacher, teacher_dataset
    from .network import save
    from .training import write_dataset_csv

    tseed = cfg["seed"] if cfg["teacher_seed"] is None else cfg["teacher_seed"]
    teacher = make_teacher(cfg["layers"], cfg["vf"], seed=tseed)
    sampler = PhaseSampler(seed=cfg["seed"], modulus_ratio=tuple(cfg["modulus_ratio"]))
    split = teacher_dataset(teacher, sampler, cfg["n_train"], cfg["n_test"])
    write_dataset_csv(split.train, _out(cfg, "train.csv"))
    write_dataset_csv(split.test, _out(cfg, "test.csv"))
    save(teacher, _out(cfg, "teacher.json"))
    log.info("wrote %d training and %d test samples", cfg["n_train"], cfg["n_test"])
    return ["train.csv", "test.csv", "teacher.json"]


def _fit(cfg, p0) -> list[str]:
    from .network import extract_volume_fraction, save
    from .training import DataSplit, Dataset, TrainConfig, read_dataset_csv, train

    tr = read_dataset_csv(cfg["train"])
    te = read_dataset_csv(cfg["test"]) if cfg["test"] else Dataset(
        np.zeros((0, 6, 6)), np.zeros((0, 6, 6)), np.zeros((0, 6, 6)))
    tc = TrainConfig(epochs=cfg["epochs"], mini_batch_count=cfg["mini_batches"],
                     learning_rate=cfg["learning_rate"], optimizer=cfg["optimizer"],
                     seed=cfg["seed"], early_stop=bool(cfg["early_stop"]), log_every=500)
    p, hist = train(p0, DataSplit(tr, te), tc)
    save(p, _out(cfg, "model.json"))
    hist.write_csv(_out(cfg, "history.csv"))
    if len(hist):
        k = hist.best_epoch - 1
        print(f"best epoch {hist.best_epoch}: train error {hist.train_error[k]:.4%}, "
              f"test error {hist.test_error[k]:.4%}, "
              f"volume fraction {extract_volume_fraction(p):.4f}")
    else:
        print("no epochs run; model equals its initialization")
    return ["model.json", "history.csv"]


def cmd_train(cfg) -> list[str]:
    from .training import init_random

    return _fit(cfg, init_random(cfg["layers"], seed=cfg["seed"]))


def cmd_transfer(cfg) -> list[str]:
    from .network import load
    from .training import transfer_init

    return _fit(cfg, transfer_init(load(cfg["source"]), cfg["layers"]))


DEFAULT_ANCHORS = [(0.10, 1 / 3, 1 / 3), (0.10, 0.5, 0.5), (0.10, 1.0, 0.0), (0.30, 1.0, 0.0)]


def cmd_build_db(cfg) -> list[str]:
    from .database import Descriptor, fit_anchors, save_db
    from .network import load

    if cfg["synthetic_layers"]:
        from .datagen import synthetic_family

        fam = synthetic_family(cfg["synthetic_layers"], seed=cfg["seed"])
        anchors = [(Descriptor(*a), fam(*a)) for a in DEFAULT_ANCHORS]
    else:
        specs = cfg["anchors"] or []
        if len(specs) != 4:
            raise ConfigError(f"build-db.anchors: exactly 4 anchors required, got {len(specs)}")
        anchors = []
        for s in specs:
            if isinstance(s, str):
                try:
                    desc, path = s.split("=", 1)
                    vf, a11, a22 = (float(v) for v in desc.split(","))
                except ValueError:
                    raise ConfigError(f"build-db.anchors: cannot parse {s!r}") from None
            else:
                vf, a11, a22, path = s["vf"], s["a11"], s["a22"], s["model"]
            anchors.append((Descriptor(vf, a11, a22), load(path)))
    save_db(fit_anchors(anchors), _out(cfg, "database.json"))
    return ["database.json"]


def cmd_query(cfg) -> list[str]:
    from .database import Descriptor, load_db, query, query_tensor
    from .network import save

    db = load_db(cfg["db"])
    if cfg["tensor"] is not None:
        if cfg["vf"] is None:
            raise ConfigError("query.vf: required with a tensor")
        p, _ = query_tensor(db, cfg["vf"], np.reshape(cfg["tensor"], (3, 3)),
                            allow_extrapolation=bool(cfg["allow_extrapolation"]))
    else:
        for k in ("vf", "a11", "a22"):
            if cfg[k] is None:
                raise ConfigError(f"query.{k}: required parameter is missing")
        p = query(db, Descriptor(cfg["vf"], cfg["a11"], cfg["a22"]),
                  allow_extrapolation=bool(cfg["allow_extrapolation"]))
    save(p, _out(cfg, "model.json"))
    return ["model.json"]


def cmd_predict(cfg) -> list[str]:
    from .mandel import Rotation
    from .network import load
    from .online import DmnMaterialPoint, mixed_control_path, random_path, read_path_csv

    p = load(cfg["model"])
    if cfg["path"]:
        path = read_path_csv(cfg["path"])
    else:
        path = random_path(cfg["random_steps"], seed=cfg["seed"], max_strain=cfg["max_strain"])
    rot = cfg["rotation"] or p.metadata.get("rotation")
    mp = DmnMaterialPoint(p, _materials(cfg["constants"]),
                          Rotation(*rot) if rot is not None else None)
    hist = mixed_control_path(mp, path)
    hist.write_csv(_out(cfg, "response.csv"))
    return ["response.csv"]


def cmd_simulate(cfg) -> list[str]:
    from .database import Descriptor, load_db
    from .macrosim import (DescriptorField, SimConfig, VelocityBC, box_mesh,
                           load_descriptor_field, run_explicit, write_snapshots)

    db = load_db(cfg["db"])
    m = cfg["mesh"]
    try:
        mesh = box_mesh(tuple(m["shape"]), tuple(m["size"]), float(m["density"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"simulate.mesh: {exc}") from None
    if cfg["field"]:
        field = load_descriptor_field(cfg["field"])
    elif cfg["descriptor"]:
        field = DescriptorField.uniform(mesh.n_elements, Descriptor(*cfg["descriptor"]),
                                        cfg["quaternion"])
    else:
        raise ConfigError("simulate.field: give a descriptor field file or a uniform descriptor")
    try:
        bcs = tuple(VelocityBC(b["set"], int(b["component"]), float(b["velocity"]))
                    for b in cfg["bcs"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"simulate.bcs: {exc}") from None
    for b in bcs:
        if b.node_set not in mesh.sets:
            raise ConfigError(f"simulate.bcs: unknown node set {b.node_set!r}")
    sc = SimConfig(end_time=float(cfg["end_time"]), safety=float(cfg["safety"]), bcs=bcs,
                   output_every=int(cfg["output_every"]), threads=cfg["threads"],
                   allow_extrapolation=bool(cfg["allow_extrapolation"]))
    res = run_explicit(mesh, field, db, _materials(cfg["constants"]), sc)
    res.write_history(_out(cfg, "history.csv"))
    vtk = write_snapshots(res, cfg["out"])
    log.info("%d steps in %.2f s", res.n_steps, res.wall_time)
    return ["history.csv"] + [os.path.basename(v) for v in vtk]


def cmd_inspect(cfg) -> list[str]:
    import csv

    from .network import load, network_stats

    p = load(cfg["model"])
    st = network_stats(p)
    print(st.summary())
    if cfg["weights_csv"]:
        path = cfg["weights_csv"]
        if not os.path.isabs(path):
            path = _out(cfg, path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "weight"])
            for k, v in enumerate(st.node_weights):
                w.writerow([k, repr(float(v))])
        return [os.path.basename(path)]
    return []


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "transfer": cmd_transfer,
    "build-db": cmd_build_db, "query": cmd_query, "predict": cmd_predict,
    "simulate": cmd_simulate, "inspect": cmd_inspect,
}


def _exit_code(exc: BaseException) -> int:
    from .database import HullError
    from .macrosim import SimulationError
    from .network import DegenerateNetworkError, ModelFormatError
    from .online import PathError, StepError
    from .plasticity import ConstitutiveError
    from .training import TopologyError, TrainingError

    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (StepError, PathError, SimulationError, TrainingError,
                        ConstitutiveError, DegenerateNetworkError, np.linalg.LinAlgError)):
        return EXIT_SOLVER
    if isinstance(exc, (ModelFormatError, HullError, TopologyError, ValueError, KeyError)):
        return EXIT_DATA
    if isinstance(exc, OSError):
        return EXIT_IO
    raise exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        if not os.path.isdir(cfg["out"]):
            os.makedirs(cfg["out"])
            log.info("created output directory %s", cfg["out"])
        outputs = COMMANDS[args.command](cfg)
        write_manifest(args.command, cfg, outputs)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = _exit_code(exc)
        log.error("%s: %s", type(exc).__name__, exc)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
