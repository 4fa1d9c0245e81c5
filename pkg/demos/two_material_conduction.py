"""Heat conduction through two materials on non-matching meshes coupled along y = 0.5.

    python demos/two_material_conduction.py [--kappa-a 2] [--kappa-b 1] [--levels 5]
"""

import argparse

from slidemesh.harness import two_material_conduction_case

p = argparse.ArgumentParser()
p.add_argument("--kappa-a", type=float, default=2.0)
p.add_argument("--kappa-b", type=float, default=1.0)
p.add_argument("--levels", type=int, default=5)
args = p.parse_args()

rep = two_material_conduction_case(args.kappa_a, args.kappa_b, args.levels)
print(f"{'h':>9} {'|T-T_h|':>11} {'|[T]|':>11}")
for h, e, j in rep.rows:
    print(f"{h:9.4f} {e:11.4e} {j:11.4e}")
for name, (rate, _) in rep.rates().items():
    print(f"rate {name}: {rate:.3f}")
