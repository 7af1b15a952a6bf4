"""Quadrature weights for inner products on discrete grids."""
import numpy as np


def trapezoid_weights(grid):
    """Trapezoid-rule weights so that sum(w * f) approximates the integral
    of f over [grid[0], grid[-1]]."""
    grid = np.asarray(grid, dtype=float)
    w = np.empty_like(grid)
    d = np.diff(grid)
    w[0] = d[0] / 2.0
    w[-1] = d[-1] / 2.0
    w[1:-1] = (d[:-1] + d[1:]) / 2.0
    return w


def quad_weights(grid):
    """Weights defining the discrete inner product <f,g> = sum(w f g).

    Uniform grids get the rectangle rule (every weight equal to the
    spacing), which treats each point as one cell of equal mass; uneven
    grids fall back to trapezoid weights.
    """
    grid = np.asarray(grid, dtype=float)
    d = np.diff(grid)
    if np.allclose(d, d[0], rtol=1e-8, atol=0.0):
        return np.full(grid.shape, d[0])
    return trapezoid_weights(grid)
