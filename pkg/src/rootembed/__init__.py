"""Root-type Skorokhod embeddings for general initial and target laws."""
from .backend import active_name as active_backend
from .barrier import (Barrier, exit_barrier, extract_barrier, point_barrier, read_barrier,
                      write_barrier)
from .diagnostics import (comparison_report, convergence_report, ks_w1, minimality_report,
                          surface_estimate, verify_embedding)
from .model import (AdmissibleSet, Atom, DiffusionSpec, ProbabilityMeasure, Uniform, a_set, c_star,
                    potential_fn, sample_measure, validate_sigma)
from .optimality import (build_payoff, correction_functions, excursion_embedding, m_surface,
                         martingale_check, mpe_compare, pathwise_check, trivial_embedding_sampler)
from .simulator import (HittingEnsemble, SimConfig, local_time_profile, principal_expectation,
                        simulate_chain, simulate_hitting, stopped_potential_mc)
from .solver import PotentialSurface, SpaceTimeGrid, build_grid, solve_vi, surface_query

__version__ = "0.1.0"
