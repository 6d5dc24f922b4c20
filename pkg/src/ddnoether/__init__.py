"""Symmetries, Noether's theorem and self-adjointness for differential-difference equations."""
from .expr import Context, Jet, is_zero, normalize, parse, partial, render, substitute
from .calculus import DivergencePair, divergence, euler, frechet, frechet_adjoint, shift, total_derivative
from .symmetry import (DDESystem, EvolutionaryField, SolvedForm, VectorField, check_symmetry,
                       reduce_mod, solve_point)
from .variational import ConservationLaw, Lagrangian, euler_lagrange, noether, verify_cl
from .adjoint import Substitution, adjoint_cl, adjoint_system, check_self_adjoint
from .sysfile import load, loads

__version__ = "0.1.0"
