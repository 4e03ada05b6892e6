"""Pure-numpy implementation of the batch alternating-projection loop.

Semantics must stay in lockstep with the compiled twin in ``_ppa_cy.pyx``:
same sphere-center conventions, same degeneracy rule, same stopping rule.
Inputs are assumed finite; validation happens at the public API layer.
"""

from __future__ import annotations

import numpy as np

from ..geometry import project_onto_rotation_group

BACKEND_NAME = "python"


def _objective(rotation, translation, p_local, p_anchor, ranges):
    est = p_local @ rotation.T + translation
    residual = ranges - np.linalg.norm(est - p_anchor, axis=1)
    return float(residual @ residual)


def _project(rotation, translation, p_local, p_anchor, ranges):
    points = p_local @ rotation.T + translation
    diff = points - p_anchor
    dist = np.linalg.norm(diff, axis=1)
    out = p_anchor.copy()
    on_ray = (ranges > 0.0) & (dist > 0.0)
    scale = np.zeros_like(dist)
    scale[on_ray] = ranges[on_ray] / dist[on_ray]
    out[on_ray] += scale[on_ray, None] * diff[on_ray]
    at_center = (ranges > 0.0) & (dist == 0.0)
    out[at_center, 0] += ranges[at_center]
    return out


def ppa_run(p_local, p_anchor, ranges, rotation0, translation0, max_iters, rel_tol):
    """Alternate sphere projections and the closed-form pose update.

    Returns ``(rotation, translation, surface_points, trace, iterations,
    degenerate)`` where ``trace[k]`` is the objective after ``k`` pose
    updates and ``surface_points`` are consistent with the final pose.
    """
    rotation = np.array(rotation0, dtype=float)
    translation = np.array(translation0, dtype=float)

    p_bar = p_local.mean(axis=0)
    p_centered = p_local - p_bar
    # All-identical local points leave the rotation unidentifiable.
    spread = float(np.abs(p_centered).max(initial=0.0))
    degenerate = spread <= 1e-12 * (1.0 + float(np.abs(p_bar).max(initial=0.0)))

    trace = np.empty(max_iters + 1)
    trace[0] = _objective(rotation, translation, p_local, p_anchor, ranges)
    iters = 0
    for k in range(1, max_iters + 1):
        y = _project(rotation, translation, p_local, p_anchor, ranges)
        y_bar = y.mean(axis=0)
        if not degenerate:
            corr = (y - y_bar).T @ p_centered
            rotation = project_onto_rotation_group(corr)
        translation = y_bar - rotation @ p_bar
        trace[k] = _objective(rotation, translation, p_local, p_anchor, ranges)
        iters = k
        if rel_tol > 0.0 and trace[k - 1] - trace[k] <= rel_tol * max(trace[k - 1], 1e-30):
            break

    y = _project(rotation, translation, p_local, p_anchor, ranges)
    return rotation, translation, y, trace[: iters + 1].copy(), iters, degenerate
