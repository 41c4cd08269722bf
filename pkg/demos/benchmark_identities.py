"""Check the closed-form benchmark by finite differences and print the residuals."""
from magnetocontrol.manufactured import verify_consistency

rep = verify_consistency(n=200, seed=1)
for name, e in rep.errors.items():
    print(f"{name:28s} {e:.2e}")
print("all identities hold" if rep.passed else f"failed: {rep.failures()}")
