"""Tour of the numeric kernels under the solver.

Demonstrates, with small printed checks:
  * the stacked dynamics matrices against a step-wise recursion,
  * the symmetric PSD square root on a singular covariance,
  * the standard-normal quantile round trip,
  * the gain <-> feedback-law bijection and its causal structure,
  * the plain-text dump of an assembled conic program.
"""

import numpy as np

import covsteer as cs

rng = np.random.default_rng(0)

# --- stacked dynamics vs direct recursion -------------------------------
spec = cs.ProblemSpec.constant(
    A=[[1.0, 0.3], [0.0, 0.9]], B=[[0.0], [1.0]], D=0.05 * np.eye(2),
    Q=np.eye(2), R=[[1.0]], horizon=6,
    mu0=[1.0, 0.0], Sigma0=0.2 * np.eye(2), muN=[0.0, 0.0], SigmaN=np.eye(2),
)
lifted = cs.build_lifted(spec)
x0 = rng.normal(size=2)
U = rng.normal(size=6)
W = rng.normal(size=12)
stacked = lifted.calA @ x0 + lifted.calB @ U + lifted.calD @ W
x, direct = x0, [x0]
for k in range(6):
    A, B, D = spec.systems[k]
    x = A @ x + B @ U[[k]] + D @ W[2 * k:2 * k + 2]
    direct.append(x)
err = np.abs(stacked - np.concatenate(direct)).max()
print(f"stacked vs step-wise trajectory: max |diff| = {err:.2e}")

# --- PSD square root of a singular matrix -------------------------------
M = np.diag([4.0, 1.0, 0.0])  # rank deficient: Cholesky would fail
S = cs.psd_sqrt(M)
print(f"psd_sqrt(diag(4,1,0)) diagonal = {np.diag(S)}, "
      f"reconstruction error {np.abs(S @ S - M).max():.1e}")

# --- normal quantile -----------------------------------------------------
for p in (0.5, 0.999, 0.9995):
    z = cs.inv_norm_cdf(p)
    print(f"inv_norm_cdf({p}) = {z:.9f}, Phi(z) - p = {cs.norm_cdf(z) - p:+.1e}")

# --- gain <-> feedback law ----------------------------------------------
pattern = cs.GainPattern.for_lifted(lifted)
K = pattern.to_matrix(0.4 * rng.normal(size=pattern.n_dec))
policy = cs.recover_L(K, lifted)
K_back = cs.feedback_to_gain(policy.L, lifted)
print(f"gain round trip K -> L -> K: max |diff| = {np.abs(K - K_back).max():.2e}")
print("per-step feedback widths:",
      [g.shape[1] for g in policy.step_gains],
      "(input k sees the ones block and states 0..k)")

# --- conic program dump ---------------------------------------------------
rows = cs.make_rows(
    cs.lift_halfspaces(
        cs.ProblemSpec.constant(
            A=[[1.0, 0.3], [0.0, 0.9]], B=[[0.0], [1.0]], D=0.05 * np.eye(2),
            Q=np.eye(2), R=[[1.0]], horizon=6,
            mu0=[1.0, 0.0], Sigma0=0.2 * np.eye(2), muN=[0.0, 0.0],
            SigmaN=np.eye(2),
            chance_set=[cs.HalfspaceConstraint(a=[1, 0], b=3.0,
                                               steps=[2, 4], p_fail=0.01)],
            total_risk=0.02,
        ),
        lifted,
    ),
    lifted,
)
program = cs.assemble(lifted, spec.muN, spec.SigmaN, rows)
from pathlib import Path
Path("results").mkdir(exist_ok=True)
cs.dump_program(program, "results/kernel_demo_program.txt")
with open("results/kernel_demo_program.txt") as fh:
    head = [next(fh).rstrip() for _ in range(4)]
print("program dump header:", " | ".join(head))
