"""
Convergence towards a travelling front
======================================

The first example has a closed-form travelling wave, so errors can be
measured directly. Halving the step should halve the temporal error, and
halving the mesh width should quarter the spatial one.
"""

from nagumofem import SchemeConfig, convergence_study, get_problem

prob = get_problem("ex1")

# Time: the spatial error of the mesh swamps the temporal one, so
# compare against a run with a much smaller step on the same mesh.
mesh = prob.mesh("right45", 50)
for treatment in ("EM", "IM", "HEIM1", "HEIM2"):
    tab = convergence_study(prob, SchemeConfig(treatment), "time", [0.5, 0.25, 0.125], 5.0,
                            mesh=mesh, reference="fine", ref_factor=8)
    errs = " ".join(f"{r.error:.3e}" for r in tab.rows)
    rates = " ".join(f"{r:.2f}" for r in tab.rates)
    print(f"time  {treatment:6s} errors {errs}  rates {rates}")

# Space: a tiny step and a short horizon leave only the spatial error.
tab = convergence_study(prob, SchemeConfig(dt=1e-3), "space", [25, 50, 100], 0.25)
for r in tab.rows:
    print(f"space h={r.parameter:6.2f} N_e={r.n_elements:6d} error={r.error:.3e} rate={r.rate}")
