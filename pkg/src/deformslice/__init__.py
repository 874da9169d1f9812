"""Training-free slicing of deformable attention, its hardware cost model,
and a bi-objective search for slice configurations."""

from .cost import CostModelParams, TrafficReport, resource, simulate_traffic
from .dat_core import (DeformAttnParams, ReferenceGrid, SampleTrace, forward_full, load_params,
                       make_params, reference_grid, save_params, synthesize_params)
from .divergence import DivergenceParams, d_alpha, d_alpha_clamped, kd_loss, kd_loss_grad, kl
from .errors import DomainError, FormatError, NumericError, SearchSpaceTooLarge, ShapeError
from .search import (Candidate, Evaluator, ParetoFront, SearchParams, SearchSpace, SliceEvaluator,
                     SyntheticEvaluator, brute_force_front, crossover, dominance_audit, evaluate,
                     hypervolume, mutate, run_search)
from .slicer import PatchLayout, SliceConfig, fidelity, forward_sliced, layout
from .tensor import bilinear_sample, linear, softmax

__version__ = "0.1.0"
