"""
Admissible time steps
=====================

For each way of splitting the reaction term between the implicit and
explicit side there is an interval of step sizes that keeps the discrete
solution nonnegative. The upper end comes from the reaction function, the
lower end from the mesh.
"""

import numpy as np

from nagumofem import DiffusionField, SchemeConfig, boundedness_window, nonnegativity_window
from nagumofem.mesh import StructuredMeshKind, generate_structured_mesh

mesh = generate_structured_mesh(StructuredMeshKind("acute8", 20, 20, (0.0, 20.0, 0.0, 20.0)))
field = DiffusionField.identity(2)

print(f"{'':6s} {'lower':>9s} {'upper':>9s} {'bounded':>9s}")
for treatment in ("EM", "IM", "HEIM1", "HEIM2"):
    cfg = SchemeConfig(treatment, value_range=(0.0, 1.0))
    w = nonnegativity_window(mesh, field, None, cfg)
    b = boundedness_window(mesh, field, None, cfg)
    print(f"{treatment:6s} {w.dt_lower:9.4f} {w.dt_upper:9.4f} {b.dt_upper:9.4f}")

# With lumped mass the lower bound disappears entirely.
w = nonnegativity_window(mesh, field, None, SchemeConfig("HEIM1", "lumped", value_range=(0.0, 1.0)))
print("lumped HEIM1:", w.to_dict())

# During a run the window is re-evaluated on the current range of u, which
# is usually far narrower than [0, 1].
u = np.clip(np.random.default_rng(0).normal(0.5, 0.05, mesh.n_vertices), 0, 1)
print("EM on current data:", nonnegativity_window(mesh, field, u, SchemeConfig("EM")).dt_upper)
