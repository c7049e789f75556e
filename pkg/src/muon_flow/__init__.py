"""Regularized Muon as a spectral mirror method on particle ensembles."""

from . import chaos, diagnostics, dynamics, objectives, product, spectral
from .diagnostics import DiagnosticsRecord, energies
from .dynamics import (
    EuclideanMomentum,
    HardMuon,
    NewtonSchulzMuon,
    RegularizedMuon,
    inertial_params,
    integrate_rk4,
    run_discrete,
)
from .objectives import GatedMoE, MeanMatch, TeacherStudent
from .product import Ensemble
from .spectral import orth_eps, orth_hard, phi_eps, psi_eps

__version__ = "0.1.0"

__all__ = [
    "DiagnosticsRecord",
    "Ensemble",
    "EuclideanMomentum",
    "GatedMoE",
    "HardMuon",
    "MeanMatch",
    "NewtonSchulzMuon",
    "RegularizedMuon",
    "TeacherStudent",
    "chaos",
    "diagnostics",
    "dynamics",
    "energies",
    "inertial_params",
    "integrate_rk4",
    "objectives",
    "orth_eps",
    "orth_hard",
    "phi_eps",
    "product",
    "psi_eps",
    "run_discrete",
    "spectral",
]
