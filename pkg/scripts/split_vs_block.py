"""Worst case over whole-atom moves versus the exact worst case with split atoms.

Utility 10x below zero and x above, baseline a point mass at 0, x0 = w = 1,
p = 2.  Moving the atom as a block costs at most U(1 - k); sending a small
fraction far past the kink is cheaper for the adversary.

    python3 scripts/split_vs_block.py
"""
import math

import numpy as np

from robust_minnorm.market import AmbiguitySpec, DiscreteMeasure
from robust_minnorm.utility import UtilityFn
from robust_minnorm.worstcase import inner_value

U = UtilityFn.custom([(0.0, "affine", (0.0, 10.0)), (math.inf, "affine", (0.0, 1.0))],
                     p_growth=1, c1=10, x_lower=1)
P = DiscreteMeasure.dirac([0.0])

print(f"{'k':>6} {'block':>10} {'split':>10} {'far mass':>10} {'far z':>8}")
for k in np.round(np.linspace(0.1, 1.0, 10), 2):
    sol = inner_value(U, AmbiguitySpec(P, 2, float(k)), 1.0, [1.0])
    block = float(U(1 - k))
    far = int(np.argmax(sol.piece_z))
    print(f"{k:6.2f} {block:10.5f} {sol.value:10.5f} {sol.piece_mass[far]:10.4f} {sol.piece_z[far]:8.4f}")
