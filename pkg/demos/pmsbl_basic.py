"""Joint sparse-signal and permutation recovery on one synthetic instance.

Draws a 100-dimensional 4-row-sparse problem observed through 30 shuffled
sensing rows (half of them anchored), runs the EM solver, and prints what was
recovered. Takes a few seconds.
"""

import numpy as np

from permsbl import ProblemConfig, gen_problem, run_pmsbl, support_estimate

cfg = ProblemConfig(
    L=100, N=30, M=20, K=4, rho=0.0, snr_db=60.0, anchor_fraction=0.5,
    shared_perm=True, seed=42,
)
inst = gen_problem(cfg)
print(f"instance: L={cfg.L} N={cfg.N} M={cfg.M} K={cfg.K}, "
      f"{cfg.n_anchor} anchored rows, sigma^2 = {inst.noise.sigma2:.3e}")
print(f"true support: {inst.x_true.support}")

x_hat, state = run_pmsbl(
    inst.y,
    inst.phi.entries,
    inst.anchor_maps(),
    sigma2=inst.noise.sigma2,
    shared_perm=True,
)

nmse = np.sum((x_hat - inst.x_true.entries) ** 2) / np.sum(inst.x_true.entries**2)
perm_ok = state.perms[0] == inst.perms_true[0]
print(f"\nEM finished after {state.iters} iterations ({state.reason})")
print(f"estimated support: {tuple(int(i) for i in support_estimate(state.gamma))}")
print(f"permutation recovered exactly: {perm_ok}")
print(f"NMSE: {10 * np.log10(nmse):.1f} dB")
print(f"log-evidence went {state.log_evidence_trace[0]:.1f} -> "
      f"{state.log_evidence_trace[-1]:.1f} (non-decreasing: "
      f"{bool(np.all(np.diff(state.log_evidence_trace) >= -1e-9))})")
