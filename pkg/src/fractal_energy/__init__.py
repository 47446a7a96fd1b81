"""Self-similar convex energies on p.c.f. fractals."""

from .audit import AuditBudget, audit_a2, audit_axioms, audit_Q5, directional_derivative
from .cascade import (
    CascadeEngine,
    ExtensionTrace,
    build_cascade,
    energy_at_level,
    minimal_extension,
    monotone_energy_check,
    self_similarity_residual,
)
from .config import EnergySpec, ExperimentConfig, build_energy
from .diagnostics import (
    ContractionReport,
    cascade_bound,
    convergence_certificate,
    estimate_alpha,
    estimate_small_osc_decay,
)
from .energy import (
    A2Metadata,
    CallableEnergy,
    DirichletForm,
    EdgeForm,
    EnergyModel,
    make_dirichlet,
    make_p_edge,
    make_perturbed,
)
from .errors import *  # noqa: F401,F403
from .fractal import (
    BUILTIN_SPECS,
    FractalSpec,
    LevelFunction,
    ValidatedFractal,
    builtin,
    cell_trace,
    get_fractal,
    load_spec,
    oscillation,
    validate_spec,
)
from .renorm import (
    Renormalizer,
    SolverConfig,
    choose_H_prime,
    eigen_residual,
    lambda_theta,
    quadratic_eigen,
    renormalized_form,
    s_theta,
    solve_scaling_root,
    theta_bar,
)

__version__ = "0.1.0"
