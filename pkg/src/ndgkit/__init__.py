"""High-order nodal discontinuous Galerkin solver for periodic hyperbolic problems."""

from ._accel import backend_name
from ._version import __version__
from .basis import (NodalBasis, QuadratureRule, differentiation_matrix, gauss_lobatto,
                    interpolation_matrix, lagrange_eval, nodal_basis)
from .errors import (ConfigError, DecompositionError, ExchangeError, InstabilityError,
                     InvalidOrderError, NDGError, NonPositiveDensityError, RunError,
                     ShapeMismatchError)
from .grid import (Mesh, conserved_totals, dump_field, init_euler_subsonic, init_multisine,
                   l2_error, load_field, node_coordinates)
from .models import EquationModel, lax_friedrichs, max_wavespeed, physical_flux
from .partition import (BlockDecomposition, decompose, exchange_halos, make_transport,
                        run_partitioned)
from .solver import (RK3, RK4, RK6, RHSOperator, RKScheme, SolverConfig, StepStats, advance,
                     compute_dt, get_scheme, rhs, rk_step)
