"""Open quantum system dynamics by master equation, stochastic unravelings and collapse chains."""

from __future__ import annotations

from ._validation import ConventionError, InvariantError
from ._version import __version__
from .core import (OperatorSet, Superoperator, choi_check, choi_matrix, generator_heisenberg,
                   generator_schrodinger, liouvillian_matrix, master_evolve, semigroup_exact)
from .discrete import (DiscreteTrajectory, KrausFamily, channel_apply, channel_apply_heisenberg,
                       coarse_grain_discrete, collapse_step, dilate, kraus_validate,
                       sample_trajectory)
from .ensemble import EnsembleConfig, EnsembleResult, compare_to_master, run_ensemble, trace_distance
from .noise import (ComplexNoisePath, NoiseSeed, RealNoisePath, TestFunction, TimeGrid,
                    sample_complex_path, sample_real_path)
from .symmetry import generator_distance, rotate_ops, translate_ops
from .unravel import (TrajectoryRecord, explicit_solution, gisin_percival_evolve, girsanov_weight,
                      linear_sse_evolve, nonlinear_evolve, norm_closed_form)

__all__ = [
    "ConventionError", "InvariantError", "__version__",
    "OperatorSet", "Superoperator", "choi_check", "choi_matrix", "generator_heisenberg",
    "generator_schrodinger", "liouvillian_matrix", "master_evolve", "semigroup_exact",
    "DiscreteTrajectory", "KrausFamily", "channel_apply", "channel_apply_heisenberg",
    "coarse_grain_discrete", "collapse_step", "dilate", "kraus_validate", "sample_trajectory",
    "EnsembleConfig", "EnsembleResult", "compare_to_master", "run_ensemble", "trace_distance",
    "ComplexNoisePath", "NoiseSeed", "RealNoisePath", "TestFunction", "TimeGrid",
    "sample_complex_path", "sample_real_path",
    "generator_distance", "rotate_ops", "translate_ops",
    "TrajectoryRecord", "explicit_solution", "gisin_percival_evolve", "girsanov_weight",
    "linear_sse_evolve", "nonlinear_evolve", "norm_closed_form",
]
