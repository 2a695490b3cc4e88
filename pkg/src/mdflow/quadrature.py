"""Tensor-product Gauss-Legendre quadrature on Cartesian cells.

Cell data (transfer coefficients, source densities) are represented by
cell averages computed with a fixed-order rule.  An accuracy order of
``2m`` maps to ``m`` Gauss points per axis, so the default order 4 uses
2 points per axis.
"""

from __future__ import annotations

import numpy as np


def gauss_points_per_axis(order: int) -> int:
    """Number of Gauss points per axis for a requested accuracy order."""
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    return max(1, (order + 1) // 2)


def reference_rule(dim: int, order: int = 4):
    """Tensor-product rule on the reference cell [-1/2, 1/2]^dim.

    Returns (points, weights) with points of shape (npts, dim) and
    weights summing to 1, so that cell averages are plain weighted sums.
    """
    npts = gauss_points_per_axis(order)
    x1, w1 = np.polynomial.legendre.leggauss(npts)
    x1 = 0.5 * x1  # map [-1, 1] -> [-1/2, 1/2]
    w1 = 0.5 * w1  # unit total weight per axis
    grids = np.meshgrid(*([x1] * dim), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(points.shape[0])
    for axis in range(dim):
        wg = np.meshgrid(*([w1] * dim), indexing="ij")[axis]
        weights *= wg.ravel()
    return points, weights


def composite_rule(dim: int, order: int = 4, subdiv=1):
    """Reference rule applied on a per-axis subdivision of the cell.

    ``subdiv`` is an int or per-axis tuple of subcell counts.  Weights
    still sum to 1.  Used to resolve integrands with breaks (kinks,
    cutoffs) crossing a cell, where a single fixed-order rule stalls.
    """
    subdiv = np.broadcast_to(np.asarray(subdiv, dtype=int), (dim,))
    base_pts, base_w = reference_rule(dim, order)
    axes = []
    for a in range(dim):
        s = subdiv[a]
        axes.append((np.arange(s) + 0.5) / s - 0.5)
    grids = np.meshgrid(*axes, indexing="ij")
    shifts = np.stack([g.ravel() for g in grids], axis=-1)  # (nsub, dim)
    pts = shifts[:, None, :] + base_pts[None, :, :] / subdiv[None, None, :]
    w = np.tile(base_w, shifts.shape[0]) / shifts.shape[0]
    return pts.reshape(-1, dim), w


def cell_points(centers: np.ndarray, spacing, order: int = 4):
    """Quadrature points and weights for a batch of cells.

    Parameters
    ----------
    centers : (ncells, dim) array of cell centers
    spacing : per-axis cell widths
    order : accuracy order of the tensor-product rule

    Returns
    -------
    points : (ncells, npts, dim) physical quadrature points
    weights : (npts,) weights summing to 1 (cell-average convention)
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    spacing = np.asarray(spacing, dtype=float)
    ref, w = reference_rule(centers.shape[1], order)
    pts = centers[:, None, :] + ref[None, :, :] * spacing[None, None, :]
    return pts, w


def segment_rule(a: float, b: float, npts: int = 4):
    """Gauss-Legendre points/weights on the interval [a, b]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w
