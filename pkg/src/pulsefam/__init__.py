"""Continuous parametrized-gate synthesis via pulse family clustering."""

__version__ = "0.1.0"

from .clustering import (ClusterLabels, ElbowResult, SimilarityMatrix, elbow_k,
                         match_probability, similarity_from_distances,
                         similarity_matrix, spectral_cluster)
from .families import (Family, GateLibrary, MockFamilyConfig, PipelineConfig,
                       PipelineResult, build_gate_library,
                       compare_metrics_experiment, extend_family, full_pipeline,
                       generate_mock, interpolate)
from .lindblad import (ChannelSample, IntegratorConfig, channel_on_basis, evolve,
                       fidelity)
from .operators import (anticommutator, commutator, gate_target, pauli_basis,
                        tensor)
from .optimize import (OptimConfig, OptimResult, finite_diff_gradient,
                       optimize_gate, select_gate_time)
from .pulses import (ChannelSpec, PulseSet, PulseShape, ShapingConfig,
                     clamp_to_bounds, render, render_set, time_grid)
from .systems import (CatParams, RydbergParams, SystemModel, assemble_hamiltonian,
                      build_cat, build_rydberg, build_system,
                      cat_computational_basis)
from .transport import (Normalization, PointCloud, TransportConfig, TransportPlan,
                        curve_length, curve_point_cloud, exact_w2_small,
                        l2_distance, pulse_set_distance, sinkhorn_w2)
