"""Correlation-aware adversarial domain adaptation and generalization in numpy."""

from .config import TrainConfig
from .data import (BatchPlan, DomainDataset, DomainShift, GaussianMixtureSpec,
                   batches, dg_split, gen_gaussian_domains, load_csv, save_csv,
                   subsample_target)
from .errors import (CaadaError, ConfigError, DataError, DegenerateBatchError,
                     DimensionError, DivergenceError, EvaluationError, LabelError,
                     NonFiniteError, StateError)
from .losses import LossTerms, combine, coral_loss, cross_entropy, domain_bce
from .model import (CaadaModel, StepOutput, backward_and_step, build, forward_da,
                    forward_dg, load_checkpoint, predict, save_checkpoint)
from .trainer import (MetricsRecord, evaluate, run_ablation, run_sweep, train_da,
                      train_dg)

__version__ = "0.1.0"
