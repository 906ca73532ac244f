"""Fit a network to teacher-generated data, then transfer it to a nearby microstructure.

Usage: python demos/teacher_student.py [--epochs N]
"""
import argparse

from procdmn.datagen import PhaseSampler, make_teacher, perturb_network, teacher_dataset
from procdmn.network import compress, extract_volume_fraction, network_stats
from procdmn.training import TrainConfig, evaluate, init_random, train, transfer_init

ap = argparse.ArgumentParser()
ap.add_argument("--epochs", type=int, default=1500)
args = ap.parse_args()

teacher = make_teacher(4, 0.10, seed=42)
data = teacher_dataset(teacher, PhaseSampler(seed=1), 400, 100)
cfg = TrainConfig(epochs=args.epochs, learning_rate=3e-3, log_every=100)
student, hist = train(init_random(6, seed=100), data, cfg)
k = hist.best_epoch - 1
print(f"best epoch {hist.best_epoch}: train {hist.train_error[k]:.3%}, "
      f"test {hist.test_error[k]:.3%}")
print(f"teacher vf {extract_volume_fraction(teacher):.4f}, "
      f"student vf {extract_volume_fraction(student):.4f}")
print(network_stats(compress(student)).summary())

# a neighboring microstructure: transfer learning starts far lower than a random init
near = teacher_dataset(perturb_network(teacher, 0.05, seed=7), PhaseSampler(seed=2), 400, 100)
print(f"initial error on new data: transfer {evaluate(transfer_init(student), near.train):.1%}, "
      f"random {evaluate(init_random(6, seed=100), near.train):.1%}")
