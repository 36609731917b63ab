"""Torus quantization of integrable systems through second order in hbar."""

__version__ = "0.1.0"

from .chart import TorusChart, contour_matrices, quantized_actions, radial_action, turning_points
from .chart1d import OneDChart
from .diagrams import Diagram, eval_diagram, moyal_bracket, resolution_of_identity_check
from .fields import PhasePoint, PoissonTensor, ScalarField, evaluate, partial
from .identities import identity_suite
from .normalform import QuadraticHamiltonianSet, QuadraticNormalForm, compute_normal_form
from .oracle import exact_spectrum, exact_spectrum_1d
from .potentials import CentralForcePotential, OneDPotential, PhysicalPotential, balance_units
from .quantize import (
    EigenvalueTable,
    QuantizationRequest,
    all_corrections,
    angle_origin_invariance_test,
    connection_coefficients,
    ebk_eigenvalues,
    hard_diagram_via_gamma,
    reduce_1d,
    second_order_correction,
    torus_average,
)

__all__ = [
    "__version__",
    "TorusChart", "OneDChart", "contour_matrices", "quantized_actions",
    "radial_action", "turning_points",
    "Diagram", "eval_diagram", "moyal_bracket", "resolution_of_identity_check",
    "PhasePoint", "PoissonTensor", "ScalarField", "evaluate", "partial",
    "identity_suite",
    "QuadraticHamiltonianSet", "QuadraticNormalForm", "compute_normal_form",
    "exact_spectrum", "exact_spectrum_1d",
    "CentralForcePotential", "OneDPotential", "PhysicalPotential", "balance_units",
    "EigenvalueTable", "QuantizationRequest", "all_corrections",
    "angle_origin_invariance_test", "connection_coefficients", "ebk_eigenvalues",
    "hard_diagram_via_gamma", "reduce_1d", "second_order_correction", "torus_average",
]
