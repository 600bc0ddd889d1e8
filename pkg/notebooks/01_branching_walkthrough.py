"""
Where the first-edge window loses information
=============================================

The branching quiver has two contexts, ``ba`` and ``ca``, that share their last
edge ``a`` but continue with different laws. Depth two sees both parameters;
depth one only sees a stationary mixture of them.
"""

# %%
# Build the model and its closed-form oracle.
import numpy as np

from quiver_vlmc import build_branching_fixture
from quiver_vlmc.chain import stationary, transition_matrix
from quiver_vlmc.informative import fiber_decomposition, informative, model_chart
from quiver_vlmc.rank import minimal_window, restricted_jacobian, reduced_jacobian, sufficiency_report

eta1, eta2 = 0.3, 0.6
model, oracle = build_branching_fixture(eta1, eta2)
print(model)

# %%
# Stationary law of the depth-2 chain, next to the closed form.
law = stationary(transition_matrix(model, model.theta0)).as_dict()
for state, p in law.items():
    print(f"  {state}: {p:.6f}   closed form {oracle.pi[state]:.6f}")

# %%
# The depth-1 informative map mixes the two contexts with stationary weights.
fd = fiber_decomposition(model, model.theta0, ("a",), "d")
print("hidden contexts:", ["".join(z) for z in fd.fiber])
print("weights:", fd.weights, " q(a -> d) =", fd.value, " eta2 / D =", eta2 / oracle.D)

# %%
# Reduced coordinates: depth 2 is the identity chart, depth 1 is one number.
print("q2 reduced:", model_chart(model, 2).reduce(informative(model, model.theta0, 2)))
print("q1 reduced:", model_chart(model, 1).reduce(informative(model, model.theta0, 1)))
L1 = reduced_jacobian(model, restricted_jacobian(model, model.theta0, 1))
L2 = reduced_jacobian(model, restricted_jacobian(model, model.theta0, 2))
print("L1 =", L1, " expected", oracle.dq1_reduced)
print("L2 =\n", L2)

# %%
# Depth 1 is not sufficient: there is a direction it cannot see.
rep = sufficiency_report(model, model.theta0, 1, 2)
print(rep.verdict, "ranks", rep.rank_m, rep.rank_r)
h = rep.witness
ref = oracle.kernel_direction / np.linalg.norm(oracle.kernel_direction)
print("witness", h, " |cos| with (1 - eta1, -eta2):", abs(h @ ref))

# %%
# The minimal informative window is two.
mw = minimal_window(model, model.theta0, M_max=3)
print("ranks by depth:", mw.ranks, " m_* =", mw.m_star)
