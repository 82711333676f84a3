from typing import Callable

import numpy as np

from model.exceptions import QuadratureError

BASE_NODES = 8
MAX_LEVELS = {2: 14, 3: 5}


def sphere_area(d: int) -> float:
    """Surface measure of S^(d-1); 2 for the two-point sphere S^0."""
    return {1: 2.0, 2: 2.0 * np.pi, 3: 4.0 * np.pi}[d]


def sphere_rule(d: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Quadrature nodes and weights on S^(d-1) at a refinement level.

    S^0 is the exact two-point sum, S^1 the trapezoid rule with
    8 * 2^level nodes, S^2 a Gauss-Legendre (in cos theta) times trapezoid
    (in phi) product rule with 8 * 2^level latitudes.

    Returns:
        tuple[np.ndarray, np.ndarray]: points (m, d) and weights (m,) summing to the sphere area.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.ones(2)
    count = BASE_NODES * 2 ** level
    if d == 2:
        phi = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(phi), np.sin(phi)], axis=-1), np.full(count, 2.0 * np.pi / count)
    if d == 3:
        cos_theta, gauss_weights = np.polynomial.legendre.leggauss(count)
        longitudes = 2 * count
        phi = 2.0 * np.pi * np.arange(longitudes) / longitudes
        sin_theta = np.sqrt(1.0 - cos_theta ** 2)
        points = np.stack([
            np.outer(sin_theta, np.cos(phi)).ravel(),
            np.outer(sin_theta, np.sin(phi)).ravel(),
            np.repeat(cos_theta, longitudes)
        ], axis=-1)
        weights = np.repeat(gauss_weights, longitudes) * (2.0 * np.pi / longitudes)
        return points, weights
    raise ValueError(f'Unsupported dimension d = {d}')


def integrate_sphere(f: Callable[[np.ndarray], np.ndarray], d: int, rtol: float = 1e-6, max_level: int | None = None) -> tuple[float, int]:
    """
    Integrate f over S^(d-1), doubling nodes until successive values agree to rtol.

    Returns:
        tuple[float, int]: The integral and the node count used.

    Raises:
        QuadratureError: If max_level is reached without agreement.
    """
    points, weights = sphere_rule(d, 0)
    previous = float(np.dot(weights, f(points)))
    if d == 1:
        return previous, 2
    max_level = max_level or MAX_LEVELS[d]
    for level in range(1, max_level + 1):
        points, weights = sphere_rule(d, level)
        current = float(np.dot(weights, f(points)))
        if abs(current - previous) <= rtol * max(abs(current), 1e-300) or (current == 0.0 and previous == 0.0):
            return current, weights.size
        previous = current
    raise QuadratureError(f'Sphere quadrature in d={d} did not converge: last two values {previous:.12g}, {current:.12g}')


def sphere_mean(field, d: int) -> np.ndarray:
    """Average of a (scalar or form valued) direction function over a fine sphere rule."""
    points, weights = sphere_rule(d, 3 if d > 1 else 0)
    values = np.asarray(field(points), dtype=float)
    return np.tensordot(weights, values, axes=(0, 0)) / weights.sum()
