"""Relative estimation-error metrics.

Kept independent of the solver internals on purpose: benchmark numbers are
computed from (estimate, truth) pairs alone.
"""

from __future__ import annotations

import numpy as np


def rotation_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Frobenius-relative rotation error ``||R_hat - R|| / ||R||``."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError("rotation shapes differ")
    return float(np.linalg.norm(estimate - truth) / np.linalg.norm(truth))


def translation_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Euclidean-relative translation error ``||T_hat - T|| / ||T||``."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError("translation shapes differ")
    return float(np.linalg.norm(estimate - truth) / np.linalg.norm(truth))


def pose_errors(estimate, truth) -> tuple[float, float]:
    """(rotation error, translation error) for two poses."""
    return (
        rotation_error(estimate.rotation, truth.rotation),
        translation_error(estimate.translation, truth.translation),
    )


def position_error(pose, p_local: np.ndarray, true_global: np.ndarray) -> float:
    """Mean distance between mapped local points and the true trajectory."""
    p_local = np.asarray(p_local, dtype=float)
    true_global = np.asarray(true_global, dtype=float)
    est = p_local @ pose.rotation.T + pose.translation
    return float(np.linalg.norm(est - true_global, axis=-1).mean())
