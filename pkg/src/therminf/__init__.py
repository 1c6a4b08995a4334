"""Thermalized-measure inference on dissipative networks."""

__version__ = "0.1.0"

from .phase import EnergyMetric, PhaseVector, energy_inner, energy_norm, t_inverse, t_transform
from .affine import AffineSubspace, coords, dist, embed, normal_basis, project
from .network import (
    Network,
    check_nondegeneracy,
    classical_solution,
    constraint_subspace,
    load_network,
    network_from_dict,
)
from .measures import (
    EmpiricalMeasure,
    GridMeta,
    PartitionReport,
    SlidingGaussianDensity,
    TransversalityCertificate,
    cell_mass,
    check_transversality,
    discretize,
    phi,
    read_dataset,
    sample_empirical,
    suggest_radius,
    verify_partition_assumptions,
    write_dataset,
)
from .oracle import (
    LimitMoments,
    PairCloud,
    ThermalMoments,
    limit_moments,
    sample_limit,
    sample_thermalized,
    thermalized_moments,
)
from .qoi import ONE, Expectation, QuantityOfInterest, coordinate_qoi, parse_qoi
from .thermalize import (
    ThermalizedDiscrete,
    discrete_thermal_mass,
    expectation_h,
    thermal_weight,
    to_signed_cloud,
)
from .flatnorm import (
    DiscreteSignedMeasure,
    FlatNormResult,
    flat_norm,
    fn_distance,
    fn_distance_measures,
)
from .annealing import (
    ConvergenceReport,
    Schedule,
    cauchy_diagnostic,
    convergence_study,
    default_c,
    make_schedule,
    rate_fit,
)
from .errors import (
    DatasetFormatError,
    DimensionMismatchError,
    FlatNormSolverError,
    GridCapError,
    NondegenerateNetworkError,
    NotFiniteError,
    OffSubspaceError,
    QoIParseError,
    ScheduleError,
    SubspaceDimensionError,
    TherminfError,
    TransversalityError,
    ZeroMassError,
)

__all__ = [
    "EnergyMetric",
    "PhaseVector",
    "energy_inner",
    "energy_norm",
    "t_transform",
    "t_inverse",
    "AffineSubspace",
    "project",
    "dist",
    "coords",
    "embed",
    "normal_basis",
    "Network",
    "network_from_dict",
    "load_network",
    "check_nondegeneracy",
    "classical_solution",
    "constraint_subspace",
    "SlidingGaussianDensity",
    "phi",
    "EmpiricalMeasure",
    "GridMeta",
    "cell_mass",
    "discretize",
    "sample_empirical",
    "verify_partition_assumptions",
    "PartitionReport",
    "check_transversality",
    "TransversalityCertificate",
    "suggest_radius",
    "write_dataset",
    "read_dataset",
    "ThermalMoments",
    "LimitMoments",
    "PairCloud",
    "thermalized_moments",
    "limit_moments",
    "sample_thermalized",
    "sample_limit",
    "QuantityOfInterest",
    "Expectation",
    "ONE",
    "parse_qoi",
    "coordinate_qoi",
    "ThermalizedDiscrete",
    "discrete_thermal_mass",
    "thermal_weight",
    "to_signed_cloud",
    "expectation_h",
    "DiscreteSignedMeasure",
    "FlatNormResult",
    "flat_norm",
    "fn_distance",
    "fn_distance_measures",
    "Schedule",
    "make_schedule",
    "default_c",
    "rate_fit",
    "convergence_study",
    "cauchy_diagnostic",
    "ConvergenceReport",
    "TherminfError",
    "DimensionMismatchError",
    "OffSubspaceError",
    "SubspaceDimensionError",
    "NondegenerateNetworkError",
    "TransversalityError",
    "GridCapError",
    "DatasetFormatError",
    "ZeroMassError",
    "NotFiniteError",
    "FlatNormSolverError",
    "QoIParseError",
    "ScheduleError",
    "__version__",
]
