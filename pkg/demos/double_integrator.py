"""Double integrator: steer a Gaussian cloud to a tight target distribution.

Walks through the three controllers on the same problem:

  1. mean-only  -- closed-form minimum-effort steering of the mean; the
                   covariance grows uncontrolled and the halfspace
                   Pr([1 1] x_k > 20) <= 0.001 cannot be certified;
  2. cov        -- conic program bounding the terminal covariance, no
                   chance rows;
  3. chance     -- full program with one second-order-cone row per step.

Each stage prints its cost, the worst deterministic chance residual
(feasible iff <= 0), and seeded Monte-Carlo violation frequencies.
"""

import numpy as np

from covsteer.scenario import bundled_scenario, parse_scenario, run

spec, options = parse_scenario(bundled_scenario("di"))
print(f"scenario: {options.name}  (N={spec.horizon}, n_x={spec.n_x}, "
      f"n_u={spec.n_u}, total risk {spec.total_risk})")
print(f"start   : mu0={spec.mu0}, diag(Sigma0)={np.diag(spec.Sigma0)}")
print(f"target  : muN={spec.muN}, diag(SigmaN)={np.diag(spec.SigmaN)}")
print()

bundles = {mode: run(spec, mode, options) for mode in ("mean-only", "cov", "chance")}

print(f"{'mode':<10} {'cost':>9} {'worst row residual':>20} "
      f"{'MC union violation':>20}")
for mode, b in bundles.items():
    check = b.chance_check
    print(f"{mode:<10} {b.cost:>9.4f} {check.worst_residual:>20.3e} "
          f"{b.sim_report.union_freq:>20.4f}")

print()
print("Steering the covariance costs a little control effort on top of the")
print("mean steering, and honoring the chance constraint a little more:")
costs = [bundles[m].cost for m in ("mean-only", "cov", "chance")]
print(f"  {costs[0]:.2f} < {costs[1]:.2f} < {costs[2]:.2f}")

print()
print("Per-step 1-sigma spread along the constraint normal [1, 1]:")
a = np.array([1.0, 1.0])
print(f"{'step':>4} {'mean-only':>12} {'chance':>12}")
for k in range(spec.horizon + 1):
    spread = {
        m: float(np.sqrt(a @ bundles[m].cov_traj[k] @ a))
        for m in ("mean-only", "chance")
    }
    print(f"{k:>4} {spread['mean-only']:>12.4f} {spread['chance']:>12.4f}")

print()
print("The chance-constrained gain reshapes the covariance exactly where")
print("the halfspace binds (around step 3) instead of everywhere.")
