"""Project a gradient step back onto the feasible set and look at the active sets."""
import numpy as np

from ogasched.projection import Subproblem, project_oracle, project_subproblem

rng = np.random.default_rng(0)
sub = Subproblem(z=rng.uniform(-1, 4, 6), caps=rng.uniform(0.5, 2.0, 6), capacity=3.0)
res = project_subproblem(sub)

print("z     ", np.round(sub.z, 3))
print("caps  ", np.round(sub.caps, 3))
print("y     ", np.round(res.y, 3))
print("sum y ", round(res.y.sum(), 6), "capacity", sub.capacity, "rho", round(res.rho, 4))
print("at cap", np.flatnonzero(res.workspace.at_cap), "at zero", np.flatnonzero(res.workspace.at_zero),
      "interior", np.flatnonzero(res.workspace.interior))
print("exhaustive oracle agrees:", np.allclose(res.y, project_oracle(sub)))
