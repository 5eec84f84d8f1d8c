"""Atomistic, local QC, QCE and quasi-nonlocal energies of a periodic 1D chain."""

from .chain import (ChainConfig, PeriodicField, difference, inner_product, integrate,
                    norm_l2_eps, norm_max, project_zero_mean, uniform_deformation)
from .energy_models import (ModelKind, QuadraticForm, RepresentativeGrid, energy, forces,
                            gradient, hessian, interfacial_energies, local_qc_energy,
                            qnl_index_sets)
from .linear_solver import (DeadLoad, LinearizedSolution, NotPositiveDefiniteError,
                            consistency_error, negative_norm, sin_load, solve_linearized,
                            strain_error)
from .potentials import (PotentialSpec, cauchy_born_density, evaluate, from_name,
                         inflection_radius, lennard_jones, morse, tabulated)
from .stability import (critical_strain, eta_F, lambda_min, mu_eps, stability_coefficient,
                        stability_constants)

__version__ = "0.1.0"
