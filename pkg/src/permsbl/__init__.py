"""Joint recovery of row-sparse signals and unknown sensing-row permutations.

Sparse Bayesian learning solvers for the multiple-measurement observation
model y_m = P_m Phi x_m + n_m with unknown permutations P_m: an EM solver for
uncorrelated columns, a Kalman-smoother EM solver for AR(1)-correlated
columns, a simultaneous-OMP baseline, and a seeded Monte Carlo harness.
"""

from .errors import (
    AnchorError,
    ConfigError,
    DegenerateSignalError,
    NumericalError,
    SizeGuardError,
    UnsupportedParameterError,
)
from .harness import (
    ALGORITHMS,
    SweepRow,
    SweepSpec,
    TrialResult,
    emit_plot_data,
    read_csv,
    run_sweep,
    run_trial,
    write_csv,
)
from .model import (
    MeasurementMatrix,
    NoiseModel,
    PermutationMap,
    ProblemConfig,
    ProblemInstance,
    SignalMatrix,
    apply_perm,
    gen_problem,
    instance_from_json,
    instance_to_json,
    load_instance,
    save_instance,
    sigma_from_snr,
    trial_seed,
)
from .permutation import (
    PermObjective,
    brute_force_argmax,
    complete_from_anchors,
    constrained_rearrangement_argmax,
    perm_objective,
    rearrangement_argmax,
    select_shared_permutation,
)
from .pksbl import (
    KalmanState,
    SmoothedMoments,
    kalman_forward,
    lag_one_covariances,
    rts_smooth,
    run_pksbl,
    smoothed_moments,
    update_gamma_ar,
)
from .pmsbl import (
    EMState,
    HyperParams,
    PosteriorStats,
    log_evidence,
    posterior,
    run_pmsbl,
    support_estimate,
    update_gamma,
)
from .somp import SompResult, one_shot_perm, somp_recover, somp_solve

__version__ = "0.1.0"
