"""
Evaluating the fixed ten-term reference model
=============================================

The package ships a fixed ten-term model with literal coefficients. Its
time unit is not known, so it serves for right-hand-side algebra rather
than for reproducing trajectories.
"""

from glucosindy.simulate import REFERENCE_MODEL, evaluate_rhs

print(REFERENCE_MODEL)
print("terms:", ", ".join(sorted(REFERENCE_MODEL.support)))

# %%
# At the origin only the constant survives; at G = 1 the constant, G and G²
# terms add up.
print("dG/dt at origin:", evaluate_rhs(REFERENCE_MODEL, 0, 0, 0, 0))
print("dG/dt at G = 1: ", evaluate_rhs(REFERENCE_MODEL, 1, 0, 0, 0))

# %%
# A small grid over glucose and basal shows where the model predicts rising
# or falling glucose.
for b in (0.0, 0.01, 0.02):
    row = [evaluate_rhs(REFERENCE_MODEL, g, 0.0, 0.0, b) for g in (0.5, 1.0, 2.0)]
    print(f"b = {b:4.2f}:", "  ".join(f"{v:9.3f}" for v in row))
