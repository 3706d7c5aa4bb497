"""Device-independent randomness certification from Tsirelson-type
boundary conditions for qubit POVMs."""

__version__ = "0.1.0"

from .certify import (  # noqa: E402
    CertificateResult,
    certify_record,
    certify_table,
    min_entropy,
    pg_extremal_ideal,
    shannon_outcomes,
    square_pg_boundary,
    square_pg_full,
    verify_eve_strategy_boundary,
    verify_eve_strategy_full,
    von_neumann_lb,
)
from .quadrature import QuadratureSpec, gauss_radau  # noqa: E402
from .qubit import RankOnePOVM, RankOnePOVMElement, phi_theta  # noqa: E402
from .scenario import BUILTIN_POVMS, CorrelationTable, NoiseModel, protocol_correlations  # noqa: E402
from .tsirelson import BoundaryCoefficients, derive_coefficients  # noqa: E402
