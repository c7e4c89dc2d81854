"""Weyl functions of matrix Dirac systems on the half-line.

Propagation of the space/time linear systems attached to the defocusing
matrix NLS, Weyl-function estimation through nested matrix balls, its time
evolution by linear-fractional transforms, recovery of the corner jet from
boundary data, and residual-based verification against exact plane waves.
"""

from .chebseries import ChebSeries
from .dirac import (DEFAULT_TOL, DomainBounds, PotentialProfile,
                    PropagatorSamples, Signature, SpectralParameter, TimeTrace,
                    assemble_V, build_F, build_G, h_form, propagate_R,
                    propagate_u)
from .errors import (BallDomainError, PropagationError, RecursionBlowupError,
                     SingularDenominatorError, SpectralDomainError,
                     WeylstripError)
from .evolution import (AdmissibleDomains, EvolutionResult, MonotonicityCheck,
                        QuarterPlaneEstimate, SpectralDomain,
                        admissible_domains, bounds_from_trace, evolve_weyl,
                        quarterplane_weyl, r_monotonicity_check)
from .recovery import (BoundaryTrace, CornerJet, DenjoyCarlemanReport,
                       QuasiAnalyticBounds, corner_jet,
                       denjoy_carleman_diagnostic, ingest_boundary,
                       leibniz_cube, load_boundary_csv, save_boundary_csv,
                       taylor_reconstruct)
from .verify import (PlaneWaveField, SolutionField, dnls_residual,
                     factorization_residual, plane_wave,
                     zero_curvature_residual)
from .weyl import (MatrixBall, MoebiusCoefficient, WeylEstimate, ball_from_H,
                   ball_membership, balls_along, lft_compose, moebius_apply,
                   moebius_coefficient, property_j_check, weyl_constant_potential,
                   weyl_estimate)

__version__ = "0.1.0"
