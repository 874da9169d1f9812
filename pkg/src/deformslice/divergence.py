"""Alpha-divergence and the adaptive knowledge-distillation loss.

``D_alpha(p||q) = 1/(alpha(alpha-1)) * sum_i q_i [(p_i/q_i)^alpha - 1]``;
the adaptive loss takes the larger of the two one-sided divergences at
``alpha_plus`` and ``alpha_minus``. Probabilities are floored at
``PROB_FLOOR`` before any ratio is formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .tensor import softmax

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class DivergenceParams:
    """Alpha settings of the distillation objective.

    The defaults (``alpha_plus=2``, ``alpha_minus=-1``) are configuration
    choices, not published values. ``teacher``/``student``/``sampled``
    name which sub-nets produce the teacher distribution and the two
    kinds of student distribution.
    """

    alpha_plus: float = 2.0
    alpha_minus: float = -1.0
    teacher: str = "full"
    student: str = "smallest"
    sampled: str = "random"

    def __post_init__(self):
        if not self.alpha_plus > 1:
            raise DomainError(f"alpha_plus must be > 1, got {self.alpha_plus}")
        if not (self.alpha_minus < 0 or 0 < self.alpha_minus < 1):
            raise DomainError(f"alpha_minus must be < 0 or in (0, 1), got {self.alpha_minus}")


def _as_prob(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ShapeError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    return np.maximum(arr, PROB_FLOOR)


def kl(p, q) -> float:
    p = _as_prob(p, "p")
    q = _as_prob(q, "q")
    if p.shape != q.shape:
        raise ShapeError(f"p and q differ in length: {p.size} vs {q.size}")
    return float(np.sum(p * np.log(p / q)))


def d_alpha(p, q, alpha: float) -> float:
    if alpha == 0 or alpha == 1:
        raise DomainError(f"alpha={alpha} is a pole of the prefactor; use kl() for the alpha->1 limit")
    p = _as_prob(p, "p")
    q = _as_prob(q, "q")
    if p.shape != q.shape:
        raise ShapeError(f"p and q differ in length: {p.size} vs {q.size}")
    return float(np.sum(q * ((p / q) ** alpha - 1.0)) / (alpha * (alpha - 1.0)))


def d_alpha_clamped(p, q, params: DivergenceParams = DivergenceParams()) -> float:
    return max(d_alpha(p, q, params.alpha_plus), d_alpha(p, q, params.alpha_minus))


def _check_logits(teacher_logits, student_logits) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(teacher_logits, dtype=np.float64)
    s = np.asarray(student_logits, dtype=np.float64)
    if t.ndim != 2:
        raise ShapeError(f"logits must be [batch, classes], got shape {t.shape}")
    if t.shape != s.shape:
        raise ShapeError(f"teacher {t.shape} and student {s.shape} logits differ")
    return t, s


def kd_loss(teacher_logits, student_logits, params: DivergenceParams = DivergenceParams()) -> float:
    """Batch mean of the clamped divergence between softmaxed teacher and student."""
    t, s = _check_logits(teacher_logits, student_logits)
    p = softmax(t, axis=-1)
    q = softmax(s, axis=-1)
    return float(np.mean([d_alpha_clamped(pi, qi, params) for pi, qi in zip(p, q)]))


def kd_loss_grad(teacher_logits, student_logits, params: DivergenceParams = DivergenceParams()
                 ) -> np.ndarray:
    """Analytic gradient of :func:`kd_loss` w.r.t. the student logits.

    Per sample, only the active (larger) branch contributes. With
    ``g_i = -(p_i/q_i)^alpha / alpha`` the softmax chain rule gives
    ``dL/dz_j = q_j (g_j - sum_i q_i g_i)``.
    """
    t, s = _check_logits(teacher_logits, student_logits)
    p = np.maximum(softmax(t, axis=-1), PROB_FLOOR)
    q = np.maximum(softmax(s, axis=-1), PROB_FLOOR)
    grad = np.empty_like(s)
    for b in range(len(s)):
        plus = d_alpha(p[b], q[b], params.alpha_plus)
        minus = d_alpha(p[b], q[b], params.alpha_minus)
        alpha = params.alpha_plus if plus >= minus else params.alpha_minus
        g = -((p[b] / q[b]) ** alpha) / alpha
        grad[b] = q[b] * (g - np.dot(q[b], g))
    return grad / len(s)
