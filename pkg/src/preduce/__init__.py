"""Computational Poisson geometry on coordinate charts."""
from .expr import Chart, Expression, parse, simplify
from .poisson import PoissonStructure, SmoothMap, bracket, hamiltonian_vector_field, is_casimir
from .submanifold import ConstraintSet, classify, sample_surface
from .dirac import DiracContext, dirac_bracket_value, dirac_vector_field
from .quotient import QuotientSpec, ReducedSystem, build_reduced, reduce_hamiltonian
from .flows import IntegratorConfig, Trajectory, integrate, integrate_constrained

__version__ = "0.1.0"
