"""Sparse asymptotic minimum variance (SAMV) estimators for array processing.

The core estimators work on a :class:`~samv.array.Dictionary` of steering
columns and a sample covariance ``R_N``::

    from samv import ArrayGeometry, build_dictionary, samv_estimate
    d = build_dictionary(ArrayGeometry.ula(12), 0, 180, 0.2)
    state, trace = samv_estimate("samv2", d, R_N)
"""

__version__ = "0.1.0"

from .amv import EstimateTrace, IterationControl, amv_estimate, amv_step, initialize_power
from .array import (
    ArrayGeometry,
    Dictionary,
    DomainError,
    Scenario,
    Source,
    SteeringDictionary,
    build_dictionary,
    sample_covariance,
    steering_matrix,
    steering_vector,
    synthesize_snapshots,
)
from .baselines import SnrRegime, asymptotic_step, iaa_estimate, music_pseudospectrum, per_estimate
from .covariance import PowerState, SingularCovarianceError, assemble_R, ml_cost
from .peaks import pick_peaks
from .sml import samv_sml_estimate, sml_cost
from .sparse import SamvVariant, samv_estimate, samv_step

__all__ = [
    "ArrayGeometry",
    "Dictionary",
    "DomainError",
    "EstimateTrace",
    "IterationControl",
    "PowerState",
    "SamvVariant",
    "Scenario",
    "SingularCovarianceError",
    "SnrRegime",
    "Source",
    "SteeringDictionary",
    "amv_estimate",
    "amv_step",
    "assemble_R",
    "asymptotic_step",
    "build_dictionary",
    "iaa_estimate",
    "initialize_power",
    "ml_cost",
    "music_pseudospectrum",
    "per_estimate",
    "pick_peaks",
    "sample_covariance",
    "samv_estimate",
    "samv_sml_estimate",
    "samv_step",
    "sml_cost",
    "steering_matrix",
    "steering_vector",
    "synthesize_snapshots",
]
