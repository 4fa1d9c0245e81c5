"""Cut quadrature between non-matching interface facets.

Builds the cuts of a straight and of a circular interface, checks that the
cut weights cover each facet exactly once and integrates a polynomial along
the straight interface.

    python demos/cut_quadrature.py
"""

import numpy as np

from slidemesh.io import build_cut_from_spec
from slidemesh.solver import check_measure_conservation

line = build_cut_from_spec({
    "interface": {"kind": "line", "origin": [0.5, 0.0], "direction": [0.0, 1.0]},
    "order": 3,
    "side_a": {"rect": [0, 0, 0.5, 1], "nx": 4, "ny": 7, "edge": "right"},
    "side_b": {"rect": [0.5, 0.25, 1, 1.25], "nx": 3, "ny": 5, "edge": "left"}})
y = np.concatenate([c.x[:, 1] for c in line.cuts])
w = np.concatenate([c.weights for c in line.cuts])
print(f"line: {len(line.cuts)} cuts, covered length {w.sum():.15f} (exact 0.75)")
print(f"      integral of y^5 {np.sum(w * y ** 5):.15f} (exact {(1 - 0.25 ** 6) / 6:.15f})")

circle = build_cut_from_spec({
    "interface": {"kind": "circle", "center": [0, 0], "radius": 0.75},
    "side_a": {"annulus": [0.5, 0.75], "n_theta": 24, "n_r": 2, "edge": "outer", "theta0": 0.1},
    "side_b": {"annulus": [0.75, 1.0], "n_theta": 32, "n_r": 2, "edge": "inner"}})
check_measure_conservation(circle)
for side in ("a", "b"):
    cov, tot = circle.covered_measure(side), circle.facet_measure(side)
    print(f"circle side {side}: {len(tot)} facets, max |covered - facet| "
          f"{np.abs(cov - tot).max():.1e}")
print(f"circle: {len(circle.cuts)} cuts")
