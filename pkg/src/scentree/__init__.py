"""Scenario trees and scenario lattices for multistage stochastic processes.

Build discrete approximations of a stochastic process from data or from a
sampler (nested clustering, stochastic approximation, kernel density
generation) and measure their quality with transportation distances.

Hot loops run through numba when available; set ``SCENTREE_BACKEND=numpy``
to use the pure numpy implementations instead.
"""

from ._accel import backend, get_backend, set_backend, set_threads
from .clustering import BuildReport, KMeansResult, grow_adaptive, kmeans, nested_cluster
from .core import (
    BranchingStructure,
    ScenarioLattice,
    ScenarioTree,
    TrajectoryFan,
    ValidationReport,
    build_tree_skeleton,
    enumerate_paths,
    load_lattice,
    load_model,
    load_tree,
    node_count_lattice,
    read_fan_csv,
    save_json,
    scenario_probability,
    tree_from_branching,
    write_fan_csv,
)
from .distance import (
    DiscreteMeasure,
    TransportPlan,
    aberration,
    nested_distance,
    nested_vs_wasserstein_check,
    transport,
    wasserstein,
)
from .errors import (
    ContractError,
    InputError,
    NumericalError,
    PathEnumerationRefused,
    ScenTreeError,
    StructureError,
)
from .kernels import (
    KernelSampler,
    KernelSpec,
    bandwidth,
    composition_sample,
    conditional_density,
    direct_tree_from_densities,
    effective_sample_size,
    kernel_eval,
    kernel_trajectory,
    kernel_trajectories,
)
from .processes import (
    ConstantSampler,
    FanSampler,
    ProcessSampler,
    ProcessSpec,
    fan_from_process,
    sample_gaussian_walk,
    sample_running_maximum,
    weekly_load_fan,
)
from .stochapprox import (
    FitReport,
    StepSizeSchedule,
    closest_path_tree,
    initial_lattice,
    initial_tree,
    lattice_approximation,
    sa_update_tree,
    tree_approximation,
)
from .svg import render_svg

__version__ = "0.1.0"
