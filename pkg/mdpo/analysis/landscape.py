"""
Gradient landscapes of preference losses over (log p_w, log p_l) grids.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from mdpo.artifacts import write_frame
from mdpo.errors import ConfigurationError, NumericalError
from mdpo.training import replay_indices

logger = logging.getLogger(__name__)

GRID_LOW = -8.0
GRID_HIGH = -0.02
GRID_POINTS = 64
DEFAULT_REFERENCE_LOG_P = np.log(0.5)


@dataclass
class LandscapeGrid:
    axis_w: np.ndarray
    axis_l: np.ndarray
    grad_w: np.ndarray
    grad_l: np.ndarray
    progress: float
    objective_id: str
    lam: float

    def header(self):
        return f'# t={self.progress!r},lambda={self.lam!r},objective={self.objective_id}'

    def to_frame(self):
        w, l = np.meshgrid(self.axis_w, self.axis_l, indexing='ij')
        return pd.DataFrame({'log_p_w': w.ravel(), 'log_p_l': l.ravel(),
                             'grad_w_abs': self.grad_w.ravel(), 'grad_l_abs': self.grad_l.ravel()})

    def mirrored_pairs(self):
        """
        Index pairs ((i, j), (j, i)) with axis_w[i] < axis_l[j]; needs equal axes.
        """
        if not np.array_equal(self.axis_w, self.axis_l):
            raise ConfigurationError('mirrored points need identical axes')
        i, j = np.triu_indices(self.axis_w.size, k=1)
        return i, j


def grid_axis(low=GRID_LOW, high=GRID_HIGH, points=GRID_POINTS):
    if not low < high < 0.0:
        raise ConfigurationError(f'grid range must satisfy low < high < 0, got [{low}, {high}]')
    if points < 2:
        raise ConfigurationError(f'a grid axis needs at least 2 points, got {points}')
    return np.linspace(low, high, points)


def landscape(objective, axis_w=None, axis_l=None, progress=0.0, reference=(DEFAULT_REFERENCE_LOG_P,) * 2):
    """
    |dL/dlog p_w| and |dL/dlog p_l| at every grid point, with log p fed to
    the loss unnormalized. DPO kinds use the fixed reference log-probabilities
    ``reference``.
    """
    axis_w = grid_axis() if axis_w is None else np.asarray(axis_w, dtype=float)
    axis_l = axis_w if axis_l is None else np.asarray(axis_l, dtype=float)
    w, l = np.meshgrid(axis_w, axis_l, indexing='ij')
    ref_w = ref_l = None
    if objective.uses_reference:
        ref_w, ref_l = np.full(w.size, reference[0]), np.full(w.size, reference[1])
    _, grad_w, grad_l = objective.losses_and_gradients(w.ravel(), l.ravel(), ref_w, ref_l, progress, horizon=1)
    if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_l))):
        raise NumericalError(f'non-finite gradient in the {objective.identifier} landscape at t={progress}')
    return LandscapeGrid(axis_w, axis_l, np.abs(grad_w).reshape(w.shape), np.abs(grad_l).reshape(w.shape),
                         float(progress), objective.identifier, objective.lam)


def landscape_series(objective, progresses=(0.0, 0.5, 1.0), axis_w=None, axis_l=None):
    return [landscape(objective, axis_w, axis_l, t) for t in progresses]


def asymmetry_fraction(grid):
    """
    Share of off-diagonal mirrored pairs where |dL/dlog p_w| is larger at
    log p_w < log p_l than at the mirrored point.
    """
    i, j = grid.mirrored_pairs()
    return float(np.mean(grid.grad_w[i, j] > grid.grad_w[j, i]))


def trace_overlay_frame(trace, max_points=1000):
    idx = replay_indices(len(trace), max_points)
    return pd.DataFrame({'step': idx, 'log_p_w': trace.log_p_w[idx], 'log_p_l': trace.log_p_l[idx],
                         't': trace.progress[idx]})


def write_landscape(grid, path):
    write_frame(grid.to_frame(), path, header=grid.header())


def write_trace_overlay(trace, path, max_points=1000):
    write_frame(trace_overlay_frame(trace, max_points), path)
