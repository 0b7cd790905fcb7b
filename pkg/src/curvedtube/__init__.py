"""Bound states of the Dirichlet Laplacian in curved tubes.

Geometry (curve, Frenet and Tang frames, cross-sections) -> finite-difference
assembly on a truncated tube -> lowest eigenpairs against the threshold mu_1,
plus an eigensolver-free variational certificate of a bound state.
"""
from . import errors
from .certificate import build_trial, certify, evaluate_certificate
from .operator import assemble_form, assemble_schroedinger, effective_potential, make_grid
from .profiles import CurvatureProfile, helix_profile, make_profile, straight
from .section import make_disk, make_interval, make_mask, make_rectangle
from .spectra import lowest_eigenpairs, refinement_study, threshold_scan
from .tang import solve_frame_ode
from .tube import TubeGeometry, build_tube, tube_from_profile

__version__ = "0.1.0"

__all__ = [
    "errors", "build_trial", "certify", "evaluate_certificate", "assemble_form",
    "assemble_schroedinger", "effective_potential", "make_grid", "CurvatureProfile",
    "helix_profile", "make_profile", "straight", "make_disk", "make_interval", "make_mask",
    "make_rectangle", "lowest_eigenpairs", "refinement_study", "threshold_scan",
    "solve_frame_ode", "TubeGeometry", "build_tube", "tube_from_profile",
]
