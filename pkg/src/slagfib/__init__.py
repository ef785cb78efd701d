"""Numerical construction of special Lagrangian torus fibres on toric hypersurfaces."""

from .ambient import (
    DefiningPolynomial, FamilyParams, PartitionedIndex, RegionConstants, RegionReport, ToricPotential,
    classify_region, hypersurface_residual, kahler_matrix, make_coefficients, project_z0,
)
from .darboux import DarbouxChart, JacobianBlocks, darboux_forward, darboux_inverse, darboux_jacobian
from .errors import (
    ChartDomainError, ConvergenceError, DegenerateError, ParameterError, ProjectionError, SlagError,
    VerificationError,
)
from .fibration import (
    ChartSpec, FibrationAtlas, ParamPoint, chart_overlap_compare, export_atlas, solve_fibre, sweep,
    tangent_map,
)
from .flows import Flow, FlowTrace, deformation_field, h_alpha_field, hamiltonian_gradient_V, phi_flow, varphi_flow
from .geometry import Geometry
from .local_model import (
    EtaProfile, FibreEmbedding, ModelParams, lagrangian_residual, model_torus, mu_of, phase_residual,
    solve_eta, zeta_of,
)
from .solver import PotentialField, SolverConfig, SolverContext, moduli_coordinate
from .tbound import TBoundReport, strong_tbound_decompose, t_bound_norms

__version__ = "0.1.0"
