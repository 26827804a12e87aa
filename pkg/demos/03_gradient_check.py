"""Compare analytic and finite-difference gradients.

Runs the same suite as ``nagg gradcheck``, then injects a 10% error into
the gradient of one primitive to show the checker catching it.
"""

from nagg import checks
from nagg.autodiff import inject_fault

results = checks.gradient_suite(seed=0, models=False)
print(f"{sum(r.passed for r in results)} of {len(results)} targets pass")
for r in results[:6]:
    print(" ", r.line())

with inject_fault("exp", 1.1):
    broken = [r for r in checks.gradient_suite(seed=0, models=False) if not r.passed]
print("\nwith a faulty exp gradient:")
for r in broken:
    print(" ", r.line())
