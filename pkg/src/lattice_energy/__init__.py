"""Energies, derivatives and local-optimality certificates for lattices and periodic point sets."""

from .calculus import (
    GradHess,
    HessianSplit,
    finite_difference,
    gradient_at_lattice,
    gradient_general,
    hessian_at_lattice,
    hessian_general,
    hessian_split_design,
)
from .catalog import load_catalog
from .certify import Certificate, certify_critical, certify_fc, certify_ps, universal_scan
from .designs import DesignReport, all_shells_design, check_2design, check_4design, check_design_even_t
from .energy import EnergyValue, Potential, energy, epstein_zeta, theta_minus_one, windowed_energy
from .enumeration import (
    PermutationTable,
    Shell,
    coset_decomposition,
    detect_lattice,
    enumerate_shells,
    min_norm,
    periodic_difference_shells,
)
from .errors import *  # noqa: F401,F403
from .forms import PeriodicForm, QuadForm, TangentVec, apply_unimodular, inner_product, point_density, retract
from .optimize import DescentTrace, descend, perturbation_sweep

__version__ = "0.1.0"
