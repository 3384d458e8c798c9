"""Per-frame affine ego-motion estimation from block motion vectors.

The displacement of a block centered at (x, y) is modeled as

    dx = a1 + a2*x + a3*y
    dy = a4 + a5*x + a6*y

and fit by iteratively reweighted least squares with a redescending
(Tukey) or monotone (Huber) weight function on the residual norms,
scaled by 1.4826 * MAD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import MotionVectorField

TUKEY_C = 4.685
HUBER_K = 1.345
MAD_TO_SIGMA = 1.4826


class EstimationError(Exception):
    """Raised when a field carries too few or degenerate vectors."""


@dataclass(frozen=True)
class AffineMotionModel:
    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0
    a4: float = 0.0
    a5: float = 0.0
    a6: float = 0.0
    inlier_fraction: float = 1.0

    def __post_init__(self):
        params = self.params
        if not np.all(np.isfinite(params)):
            raise EstimationError("affine parameters must be finite")
        if not 0.0 <= self.inlier_fraction <= 1.0:
            raise EstimationError("inlier_fraction must lie in [0, 1]")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3, self.a4, self.a5, self.a6])

    @classmethod
    def from_params(cls, p, inlier_fraction: float = 1.0) -> "AffineMotionModel":
        a1, a2, a3, a4, a5, a6 = (float(v) for v in p)
        return cls(a1, a2, a3, a4, a5, a6, inlier_fraction)


@dataclass(frozen=True)
class RobustConfig:
    max_iterations: int = 20
    convergence_eps: float = 1e-8
    weight_function: str = "tukey"  # tukey | huber
    scale_estimator: str = "mad"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_eps <= 0:
            raise ValueError("convergence_eps must be positive")
        if self.weight_function not in ("tukey", "huber"):
            raise ValueError(f"unknown weight function {self.weight_function!r}")
        if self.scale_estimator != "mad":
            raise ValueError(f"unknown scale estimator {self.scale_estimator!r}")


def apply_model(model: AffineMotionModel, point) -> tuple:
    """Displace (x, y) by the model: (x + dx, y + dy)."""
    x, y = point
    return (
        x + model.a1 + model.a2 * x + model.a3 * y,
        y + model.a4 + model.a5 * x + model.a6 * y,
    )


def _weights(residual_norms: np.ndarray, scale: float, kind: str) -> np.ndarray:
    if kind == "tukey":
        c = TUKEY_C * scale
        u = residual_norms / c
        w = np.where(u < 1.0, (1.0 - u**2) ** 2, 0.0)
    else:  # huber
        k = HUBER_K * scale
        with np.errstate(divide="ignore"):
            w = np.minimum(1.0, k / residual_norms)
        w[residual_norms == 0.0] = 1.0
    return w


def _solve_weighted(design: np.ndarray, dx: np.ndarray, dy: np.ndarray,
                    w: np.ndarray) -> np.ndarray:
    sw = np.sqrt(w)
    a = design * sw[:, None]
    px, *_ = np.linalg.lstsq(a, dx * sw, rcond=None)
    py, *_ = np.linalg.lstsq(a, dy * sw, rcond=None)
    return np.array([px[0], px[1], px[2], py[0], py[1], py[2]])


def estimate_affine(field: MotionVectorField,
                    cfg: RobustConfig = RobustConfig()) -> AffineMotionModel:
    """Robust weighted least-squares fit of the affine model to a field."""
    v = field.vectors
    if v.shape[0] < 3:
        raise EstimationError(
            f"need at least 3 motion vectors, got {v.shape[0]}"
        )
    x, y, dx, dy = v[:, 0], v[:, 1], v[:, 2], v[:, 3]
    design = np.column_stack([np.ones_like(x), x, y])
    if np.linalg.matrix_rank(design) < 3:
        raise EstimationError("degenerate geometry: block centers are collinear")

    w = np.ones(len(x))
    params = _solve_weighted(design, dx, dy, w)
    for _ in range(cfg.max_iterations):
        rx = dx - design @ params[:3]
        ry = dy - design @ params[3:]
        r = np.hypot(rx, ry)
        if not np.all(np.isfinite(r)):
            raise EstimationError("non-finite residuals during IRLS")
        scale = MAD_TO_SIGMA * np.median(np.abs(r - np.median(r)))
        if scale < 1e-9:
            # (near-)perfect fit for at least half the vectors; weight
            # exact fits fully and drop the rest
            w = (r <= 1e-6).astype(float)
            if w.sum() < 3 or np.linalg.matrix_rank(design[w > 0]) < 3:
                w = np.ones(len(x))
            params = _solve_weighted(design, dx, dy, w)
            break
        w = _weights(r, scale, cfg.weight_function)
        if w.sum() < 3 or np.linalg.matrix_rank(design[w > 0.0]) < 3:
            # MAD collapsed (near-identical inlier residuals); keep the
            # best half instead of losing all support
            w = (r <= np.median(r)).astype(float)
            if w.sum() < 3 or np.linalg.matrix_rank(design[w > 0.0]) < 3:
                raise EstimationError("robust weighting left degenerate support")
        new_params = _solve_weighted(design, dx, dy, w)
        if np.max(np.abs(new_params - params)) < cfg.convergence_eps:
            params = new_params
            break
        params = new_params

    return AffineMotionModel(
        a1=float(params[0]), a2=float(params[1]), a3=float(params[2]),
        a4=float(params[3]), a5=float(params[4]), a6=float(params[5]),
        inlier_fraction=float(np.mean(w > 0.5)),
    )
