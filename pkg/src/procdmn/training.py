"""Offline training of material networks on linear-elastic data."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .network import (
    DegenerateNetworkError,
    NetworkParams,
    NetworkStats,
    alternating_phases,
    backward_batched,
    forward_batched,
    n_leaves,
    network_stats,
)

log = logging.getLogger(__name__)

_IU = np.triu_indices(6)
_UPPER = np.zeros((6, 6), dtype=bool)
_UPPER[_IU] = True


class TrainingError(RuntimeError):
    pass


class TopologyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------
@dataclass
class Dataset:
    """Stacked ``(n, 6, 6)`` fiber, matrix and homogenized stiffnesses."""

    C_fiber: np.ndarray
    C_matrix: np.ndarray
    C_target: np.ndarray

    def __post_init__(self):
        self.C_fiber = np.asarray(self.C_fiber, dtype=float).reshape(-1, 6, 6)
        self.C_matrix = np.asarray(self.C_matrix, dtype=float).reshape(-1, 6, 6)
        self.C_target = np.asarray(self.C_target, dtype=float).reshape(-1, 6, 6)
        n = len(self.C_fiber)
        if len(self.C_matrix) != n or len(self.C_target) != n:
            raise ValueError("dataset arrays differ in length")

    def __len__(self) -> int:
        return len(self.C_fiber)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.C_fiber[idx], self.C_matrix[idx], self.C_target[idx])


@dataclass
class DataSplit:
    train: Dataset
    test: Dataset


def csv_header() -> list[str]:
    cols = []
    for prefix in ("fiber", "matrix", "target"):
        cols += [f"{prefix}_{i + 1}{j + 1}" for i, j in zip(*_IU)]
    return cols


def write_dataset_csv(data: Dataset, path) -> None:
    """One row per sample: 21 upper-triangle Mandel entries of each stiffness."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header())
        for k in range(len(data)):
            row = np.concatenate([data.C_fiber[k][_IU], data.C_matrix[k][_IU],
                                  data.C_target[k][_IU]])
            w.writerow([repr(float(v)) for v in row])


def _sym_from_upper(v: np.ndarray) -> np.ndarray:
    C = np.zeros((6, 6))
    C[_IU] = v
    return C + C.T - np.diag(np.diag(C))


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != csv_header():
        raise ValueError(f"{path}: header does not match the dataset format")
    mats = [[], [], []]
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 63:
            raise ValueError(f"{path}:{lineno}: expected 63 columns, got {len(row)}")
        try:
            vals = np.array(row, dtype=float)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric entry") from None
        for k in range(3):
            mats[k].append(_sym_from_upper(vals[21 * k:21 * (k + 1)]))
    if not mats[0]:
        raise ValueError(f"{path}: no samples")
    return Dataset(*(np.array(m) for m in mats))


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------
def loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Scaled mean absolute error over the upper triangle.

    Stacked inputs give the mean over samples.
    """
    return float(np.mean(sample_errors(pred, target)))


def sample_errors(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    den = np.abs(target[..., _UPPER]).sum(axis=-1)
    if np.any(den == 0.0):
        raise ValueError("target stiffness has zero norm")
    return np.abs(pred[..., _UPPER] - target[..., _UPPER]).sum(axis=-1) / den


def _loss_grad(pred: np.ndarray, target: np.ndarray):
    den = np.abs(target[:, _UPPER]).sum(axis=-1)
    diff = pred - target
    errs = np.abs(diff[:, _UPPER]).sum(axis=-1) / den
    G = np.where(_UPPER, np.sign(diff), 0.0) / (den[:, None, None] * len(pred))
    return errs, G


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------
def init_random(layers: int, leaf_phase=None, seed: int = 0) -> NetworkParams:
    """``z ~ U(0.2, 0.8)``, angles ``~ U(-pi/4, pi/4)``."""
    rng = np.random.default_rng(seed)
    nl = n_leaves(layers)
    z = rng.uniform(0.2, 0.8, nl)
    angles = rng.uniform(-np.pi / 4, np.pi / 4, (nl - 1, 3))
    phase = alternating_phases(layers) if leaf_phase is None else leaf_phase
    return NetworkParams(layers, z, angles, phase, {"init": "random", "seed": seed})


def transfer_init(pretrained: NetworkParams, layers: int | None = None) -> NetworkParams:
    """Start a new fit from a pretrained network."""
    if layers is not None and layers != pretrained.layers:
        raise TopologyError(f"cannot transfer a {pretrained.layers}-layer network "
                            f"into a {layers}-layer one")
    meta = {k: v for k, v in pretrained.metadata.items() if k != "descriptor"}
    meta["init"] = "transfer"
    return pretrained.replace(z=pretrained.z.copy(), angles=pretrained.angles.copy(),
                              metadata=meta)


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------
class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta, grad):
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class MomentumSGD:
    def __init__(self, lr=1e-2, momentum=0.9):
        self.lr, self.momentum = lr, momentum
        self.vel = None

    def step(self, theta, grad):
        if self.vel is None:
            self.vel = np.zeros_like(theta)
        self.vel = self.momentum * self.vel - self.lr * grad
        return theta + self.vel


OPTIMIZERS = {"adam": Adam, "sgd": MomentumSGD}


@dataclass
class TrainConfig:
    epochs: int = 10000
    mini_batch_count: int = 20
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    early_stop: bool = False
    early_stop_tol: float = 1e-5
    early_stop_window: int = 200
    log_every: int = 0


@dataclass
class TrainHistory:
    train_error: list = field(default_factory=list)
    test_error: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    best_epoch: int = -1
    stats: NetworkStats | None = None

    def __len__(self) -> int:
        return len(self.train_error)

    @property
    def best_train_error(self) -> np.ndarray:
        """Running minimum of the training error."""
        return np.minimum.accumulate(np.asarray(self.train_error, dtype=float))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_error", "test_error", "seconds"])
            for k in range(len(self)):
                w.writerow([k + 1, repr(self.train_error[k]), repr(self.test_error[k]),
                            f"{self.seconds[k]:.3f}"])


def evaluate(p: NetworkParams, data: Dataset) -> float:
    if len(data) == 0:
        return float("nan")
    return loss(forward_batched(p, data.C_fiber, data.C_matrix), data.C_target)


def train(p0: NetworkParams, data: DataSplit, cfg: TrainConfig = TrainConfig()):
    """Mini-batch gradient training of ``(z, angles)``.

    Returns the parameters with the lowest test error seen (training error
    if there is no test set) and the per-epoch history.
    """
    hist = TrainHistory()
    if cfg.epochs <= 0:
        hist.stats = network_stats(p0)
        return p0, hist
    tr = data.train
    if cfg.mini_batch_count > len(tr):
        raise ValueError("more mini-batches than training samples")
    try:
        opt = OPTIMIZERS[cfg.optimizer](lr=cfg.learning_rate)
    except KeyError:
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}") from None
    rng = np.random.default_rng(cfg.seed)
    theta = p0.flat()
    best = (np.inf, p0)
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        for idx in np.array_split(rng.permutation(len(tr)), cfg.mini_batch_count):
            p = p0.with_flat(theta)
            try:
                pred, rec = forward_batched(p, tr.C_fiber[idx], tr.C_matrix[idx],
                                            tape=True, check=False)
            except DegenerateNetworkError as exc:
                raise TrainingError(f"epoch {epoch + 1}: {exc} "
                                    f"(learning rate {cfg.learning_rate})") from exc
            errs, G = _loss_grad(pred, tr.C_target[idx])
            if not np.all(np.isfinite(errs)):
                bad = int(idx[np.argmax(~np.isfinite(errs))])
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, training "
                                    f"sample {bad} (learning rate {cfg.learning_rate})")
            dz, da = backward_batched(p, rec, G)
            theta = opt.step(theta, np.concatenate([dz, da.ravel()]))
        p = p0.with_flat(theta)
        e_tr = evaluate(p, tr)
        e_te = evaluate(p, data.test)
        hist.train_error.append(e_tr)
        hist.test_error.append(e_te)
        hist.seconds.append(time.perf_counter() - t0)
        score = e_te if len(data.test) else e_tr
        if score < best[0]:
            best = (score, p)
            hist.best_epoch = epoch + 1
        if cfg.log_every and (epoch + 1) % cfg.log_every == 0:
            log.info("epoch %d: train %.4e test %.4e", epoch + 1, e_tr, e_te)
        w = cfg.early_stop_window
        if cfg.early_stop and epoch >= w:
            old = min(hist.train_error[:-w])
            new = min(hist.train_error[-w:])
            if old - new < cfg.early_stop_tol * old:
                log.info("early stop at epoch %d (plateau)", epoch + 1)
                break
    p_best = best[1].replace(metadata={**p0.metadata, "init": p0.metadata.get("init"),
                                       "best_epoch": hist.best_epoch})
    hist.stats = network_stats(p_best)
    return p_best, hist
