"""Backdoor injection lab: trigger-free fine-tuning attacks on image classifiers.

The pipeline: pretrain a benign classifier on a class-restricted dataset,
estimate per-parameter importance from the attacker's samples, fine-tune a
copy against the combined attack / distillation / attention / importance
objective, and evaluate attack success and benign-accuracy preservation.
"""

__version__ = "0.1.0"

from backdoorlab.data import LabeledDataset, SplitSpec  # noqa: F401
from backdoorlab.models import ModelCheckpoint, TrainConfig  # noqa: F401
from backdoorlab.fisher import FisherDiagonal  # noqa: F401
from backdoorlab.losses import AttackConfig  # noqa: F401
from backdoorlab.engine import AttackRun  # noqa: F401
from backdoorlab.inversion import InversionConfig  # noqa: F401
from backdoorlab.metrics import MetricsReport  # noqa: F401
