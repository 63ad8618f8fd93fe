"""Distillation hardening for the network detector.

The student shares the teacher's architecture and is trained on the
teacher's temperature-T softened output distribution (training also runs
at temperature T); prediction happens at temperature 1.  Only the network
family is distilled: tree and linear models have no logit temperature.
"""

from dataclasses import dataclass

import numpy as np

from .detectors.base import DetectorError, evaluate
from .detectors.mlp import MLPConfig, MLPDetector


@dataclass
class DistillConfig:
    """Soft-label gradients shrink by 1/T^2 relative to hard-label training,
    so distill() scales the learning rate by T^2 (the usual compensation);
    ``learning_rate`` here is the pre-scaling base rate.  Soft targets also
    carry far less signal per batch than one-hot labels, hence more epochs
    than detector training."""

    temperature: float = 10.0
    epochs: int = 15
    batch_size: int = 256
    learning_rate: float = 0.03
    momentum: float = 0.9
    rng_seed: int = 0
    init_from_teacher: bool = False

    def validate(self):
        if self.temperature < 1.0:
            raise ValueError("temperature must be >= 1")
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError(f"bad distillation config: {self}")


@dataclass
class DistillResult:
    student: MLPDetector
    teacher_accuracy: float
    student_accuracy: float
    accuracy_regression_warning: bool  # student more than 2 points below teacher


def distill(teacher: MLPDetector, X, y, config: DistillConfig | None = None,
            X_val=None, y_val=None) -> DistillResult:
    """Train a same-architecture student on the teacher's soft labels.

    Accuracy is compared on (X_val, y_val) when given, else on the training
    set; a drop of more than 2 points only sets a warning flag.
    """
    config = config or DistillConfig()
    config.validate()
    if teacher.kind != "mlp":
        raise DetectorError("distillation is only defined for the mlp detector")

    X = np.asarray(X, dtype=np.float64)
    soft = teacher.soft_labels(X, config.temperature)

    student_cfg = MLPConfig(
        hidden=teacher.config.hidden,
        epochs=config.epochs,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate * config.temperature ** 2,
        momentum=config.momentum,
        rng_seed=config.rng_seed,
    )
    student = MLPDetector(teacher.vocab_size, student_cfg, teacher.vocab_hash)
    if config.init_from_teacher:
        for name, value in teacher.params.items():
            student.params[name] = value.copy()
    student.fit(X, soft, temperature=config.temperature)
    student.provenance = {
        "teacher_vocab_hash": teacher.vocab_hash,
        "temperature": config.temperature,
    }

    Xe = X if X_val is None else np.asarray(X_val, dtype=np.float64)
    ye = y if y_val is None else y_val
    teacher_acc = evaluate(teacher, Xe, ye).accuracy
    student_acc = evaluate(student, Xe, ye).accuracy
    return DistillResult(
        student=student,
        teacher_accuracy=teacher_acc,
        student_accuracy=student_acc,
        accuracy_regression_warning=student_acc < teacher_acc - 0.02,
    )
