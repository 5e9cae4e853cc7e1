"""A small Monte Carlo sweep: success rate vs anchored fraction, to CSV and plots.

Runs 25 seeded trials per cell for two algorithms across four anchor levels,
writes sweep.csv plus gnuplot-ready .dat files, and saves a PNG if matplotlib
is available. The full-size experiment (200+ trials) is the same call with a
bigger ``trials``; see also the ``permsbl sweep`` command.
"""

from permsbl import ProblemConfig, SweepSpec, emit_plot_data, run_sweep, write_csv

base = ProblemConfig(
    L=100, N=30, M=20, K=4, rho=0.0, snr_db=60.0, anchor_fraction=0.5,
    shared_perm=True, seed=0,
)
spec = SweepSpec(
    base=base,
    axis="anchor_fraction",
    values=(0.1, 0.2, 0.3, 0.5),
    algorithms=("pmsbl-shared", "somp"),
    trials=25,
    master_seed=0,
)
rows = run_sweep(spec, workers=2)

print(f"{'anchors':>8} {'algorithm':>14} {'success':>8} {'row acc':>8} {'nmse dB':>9}")
for r in rows:
    print(f"{r.value:8.2f} {r.algorithm:>14} {r.success_rate:8.2f} "
          f"{r.row_accuracy:8.2f} {r.nmse_db:9.1f}")

write_csv(rows, "sweep.csv")
paths = emit_plot_data(rows, "plotdata")
print("\nwrote sweep.csv and", ", ".join(paths))

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2))
    for alg in spec.algorithms:
        pts = [(r.value, r.success_rate) for r in rows if r.algorithm == alg]
        ax.plot(*zip(*pts), marker="o", label=alg)
    ax.set_xlabel("anchored fraction of rows")
    ax.set_ylabel("exact recovery rate")
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig("success_rate.png", dpi=150)
    print("wrote success_rate.png")
except ImportError:
    print("matplotlib not installed; skipped the PNG")
