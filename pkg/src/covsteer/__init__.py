"""Finite-horizon covariance steering under chance constraints.

Steers the state distribution of a discrete-time linear (possibly
time-varying) stochastic system from one Gaussian to another while
minimizing an expected quadratic cost, with per-row probabilistic
halfspace constraints converted to deterministic second-order-cone rows
and the terminal covariance bound expressed as a semidefinite block.

Typical flow::

    spec = ProblemSpec.constant(A, B, D, Q, R, N, mu0, Sigma0, muN, SigmaN,
                                chance_set=[...], total_risk=...)
    lifted = build_lifted(spec.require_valid())
    rows = make_rows(lift_halfspaces(spec, lifted), lifted)
    program = assemble(lifted, spec.muN, spec.SigmaN, rows)
    K, report = solve(program)
    policy = recover_L(K, lifted)
    sim = monte_carlo(policy, spec, n=100_000, seed=0)

or, declaratively, ``run(spec, mode, options)`` /  the ``covsteer`` CLI
with a scenario file.
"""

__version__ = "0.1.0"

from .problem import (
    HalfspaceConstraint,
    InvalidProblem,
    IssueKind,
    ProblemSpec,
    RiskTooLarge,
    StackedHalfspace,
    ValidationIssue,
    ValidationReport,
    resolve_risks,
    uniform_risk_allocation,
    validate,
)
from .lifting import (
    LiftedRow,
    LiftedSystem,
    NotPSDError,
    SqrtFailure,
    TransitionProducts,
    build_lifted,
    lift_halfspaces,
    psd_sqrt,
    transition_products,
)
from .meansteer import MeanPlan, SingularTerminalMap, mean_cost, open_loop_gain, solve_mean
from .chance import (
    DeterministicRow,
    DomainError,
    inv_norm_cdf,
    make_rows,
    norm_cdf,
    row_residual,
)
from .conic import (
    ConicProgram,
    GainPattern,
    InfeasibleError,
    NumericalFailure,
    SocRow,
    SolveReport,
    TerminalCovBlock,
    assemble,
    dump_program,
    objective_value,
    second_moment_matrix,
    solve,
    terminal_cov_block,
    terminal_mean_rows,
)
from .backends import BackendResult, ConicBackend, CvxpyBackend, default_backend
from .simulate import (
    FeedbackPolicy,
    SimReport,
    Trajectory,
    closed_moments,
    feedback_to_gain,
    monte_carlo,
    recover_L,
    rollout,
    step_moments,
)
from .scenario import (
    ChanceCheck,
    ParseError,
    ResultBundle,
    ScenarioOptions,
    SchemaError,
    bundled_scenario,
    emit,
    parse_scenario,
    run,
)

__all__ = [name for name in dir() if not name.startswith("_")]
