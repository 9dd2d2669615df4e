"""Qubit state and process tomography from I-Q plane readout records."""

from .discriminate import (
    LABEL_NOISE,
    LABEL_ONE,
    LABEL_ZERO,
    MODES,
    BVector,
    CalibrationWarning,
    ComponentParams,
    ContaminationSpec,
    MembershipMatrix,
    MixtureParams,
    assignment_solve,
    b_from_memberships,
    capacities_from_weights,
    classify_hard,
    dataset_to_b,
    delta_b,
    em_fit,
    f_matrix,
    hard_b,
    mahalanobis_sq,
    memberships_for,
    soft_b,
    soft_membership,
)
from .qcore import (
    AXES,
    DensityMatrix,
    bloch_from_density,
    density_from_bloch,
    evolve_state,
    frobenius_distance,
    measurement_matrix,
    pauli,
    psd_unit_trace_project,
    unvec,
    vec,
)
from .qhi import (
    ChannelSuperoperator,
    ChoiMatrix,
    FitWarning,
    ProjectionWarning,
    Trajectory,
    choi_from_super,
    cptp_project,
    fit_channel,
    load_trajectory,
    observe_trajectory,
    save_trajectory,
    simulate_trajectory,
    super_from_choi,
    unitary_superoperator,
)
from .qst import (
    BilevelResult,
    QstResult,
    bilevel_qst,
    qst_closed_form,
    qst_projected_gradient,
    tomography_report,
)
from .readout import (
    DatasetFormatError,
    IQDataset,
    axis_seed,
    export_csv,
    load_dataset,
    mix_seed,
    sample_outcomes,
    save_dataset,
    synthesize_iq,
)

__version__ = "0.1.0"

__all__ = [
    "AXES",
    "BVector",
    "BilevelResult",
    "CalibrationWarning",
    "ChannelSuperoperator",
    "ChoiMatrix",
    "ComponentParams",
    "ContaminationSpec",
    "DatasetFormatError",
    "DensityMatrix",
    "FitWarning",
    "IQDataset",
    "LABEL_NOISE",
    "LABEL_ONE",
    "LABEL_ZERO",
    "MODES",
    "MembershipMatrix",
    "MixtureParams",
    "ProjectionWarning",
    "QstResult",
    "Trajectory",
    "assignment_solve",
    "axis_seed",
    "b_from_memberships",
    "bilevel_qst",
    "bloch_from_density",
    "capacities_from_weights",
    "choi_from_super",
    "classify_hard",
    "cptp_project",
    "dataset_to_b",
    "delta_b",
    "density_from_bloch",
    "em_fit",
    "evolve_state",
    "export_csv",
    "f_matrix",
    "fit_channel",
    "frobenius_distance",
    "hard_b",
    "load_dataset",
    "load_trajectory",
    "mahalanobis_sq",
    "measurement_matrix",
    "memberships_for",
    "mix_seed",
    "observe_trajectory",
    "pauli",
    "psd_unit_trace_project",
    "qst_closed_form",
    "qst_projected_gradient",
    "sample_outcomes",
    "save_dataset",
    "save_trajectory",
    "simulate_trajectory",
    "soft_b",
    "soft_membership",
    "super_from_choi",
    "synthesize_iq",
    "tomography_report",
    "unitary_superoperator",
    "unvec",
    "vec",
]
