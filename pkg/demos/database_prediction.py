"""Interpolate a network from four anchors and drive it along a sigma33-free path.

Writes ``response.csv`` (strain, stress, weighted plastic strain per step).
"""
import time

import numpy as np

from procdmn.database import Descriptor, fit_anchors, query
from procdmn.datagen import online_constants, synthetic_family
from procdmn.network import extract_volume_fraction, network_stats
from procdmn.online import DmnMaterialPoint, LeafMaterials, mixed_control_path, random_path

anchors = [(0.10, 1 / 3, 1 / 3), (0.10, 0.5, 0.5), (0.10, 1.0, 0.0), (0.30, 1.0, 0.0)]
family = synthetic_family(8, seed=0, inactive_fraction=0.75)
db = fit_anchors([(Descriptor(*a), family(*a)) for a in anchors])

p = query(db, Descriptor(0.15, 1.0, 0.0))
print(f"interpolated network: {network_stats(p).active_dofs} active DOFs, "
      f"vf {extract_volume_fraction(p):.3f}")

oc = online_constants()
mp = DmnMaterialPoint(p, LeafMaterials(oc.C_fiber, oc.C_matrix, oc.hardening))
t0 = time.perf_counter()
hist = mixed_control_path(mp, random_path(20, seed=0, max_strain=0.02))
print(f"20 steps in {time.perf_counter() - t0:.2f} s")
sig = np.asarray(hist.stress)
print(f"max |sigma33| {np.abs(sig[:, 2]).max():.2e} GPa, "
      f"final weighted plastic strain {hist.ep_bar[-1]:.4f}")
hist.write_csv("response.csv")
