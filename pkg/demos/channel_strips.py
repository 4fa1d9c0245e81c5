"""Two channels meeting with a vertical offset: the uncovered interface strips
become walls through weakly imposed no-slip conditions.

Prints the global mass balance and the leakage through the strips per
level, over the whole strips and away from the two reentrant corners.

    python demos/channel_strips.py [--levels 5] [--offset 0.3]
"""

import argparse

import numpy as np

from slidemesh.harness import (boundary_flux, channel_config, fit_rate, poiseuille_error,
                               strip_leakage)
from slidemesh.solver import Solver

p = argparse.ArgumentParser()
p.add_argument("--levels", type=int, default=5)
p.add_argument("--offset", type=float, default=0.3)
args = p.parse_args()

corners = [(1.0, args.offset), (1.0, 1.0)]
rows = []
print(f"{'h':>9} {'mass':>9} {'int|u.n|':>10} {'(corners out)':>13}")
for level in range(1, args.levels + 1):
    s = Solver(channel_config(level, args.offset))
    s.run()
    q_in, q_out = -boundary_flux(s, 0, "inflow"), boundary_flux(s, 1, "outflow")
    _, leak = strip_leakage(s)
    _, leak_far = strip_leakage(s, exclude=corners, radius=0.1)
    h = s.meshes[0].min_edge_length()
    rows.append((h, leak, leak_far))
    print(f"{h:9.4f} {abs(q_in - q_out) / q_in:9.1e} {leak:10.3e} {leak_far:13.3e}")
h, leak, far = np.array(rows).T
print(f"leakage rate {fit_rate(h, leak)[0]:.3f}, away from corners {fit_rate(h, far)[0]:.3f}")

full = Solver(channel_config(3, offset=0.0))
full.run()
print(f"full overlap: Poiseuille error {100 * poiseuille_error(full):.2f}%")
