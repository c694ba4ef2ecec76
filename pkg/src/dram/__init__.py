"""Dyadic pose forecasting with residual attention between a monadic and a dyadic predictor."""

from .autodiff import DimensionError, ParameterError, Parameter, Tensor, grad_check, no_grad
from .backbones import ConfigError, LstmConfig, TcnConfig, build_backbone, causality_probe, receptive_field
from .metrics import SIGMA_GRID, MetricsReport, ape, metrics_report, pck
from .model import (ForecastModel, Variant, dram_combine, dram_loss, load_checkpoint, residual_attention,
                    save_checkpoint)
from .pose import (GROUPS, SkeletonTopology, align_to_90hz, default_topology, hemisphere_fix, load_topology,
                   positions_to_rotations, rotations_to_positions)
from .synth import SynthConfig, generate_corpus, generate_sequence, make_split, read_dataset, write_dataset
from .training import TrainerConfig, evaluate, rollout, train

__version__ = "0.1.0"
