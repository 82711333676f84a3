import itertools
from math import comb
from typing import Callable

import numpy as np

MACHINE_EPS = np.finfo(float).eps

SymbolFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _central_stencil(order: int) -> list[tuple[float, float]]:
    """Offsets (in units of the step) and weights of the central difference of a given order."""
    return [(order / 2.0 - m, (-1.0) ** m * comb(order, m)) for m in range(order + 1)]


def _axis_steps(points: np.ndarray, base: float) -> np.ndarray:
    return base * np.maximum(1.0, np.abs(points))


def mixed_partial(
    f: SymbolFunction,
    x: np.ndarray,
    xi: np.ndarray,
    alpha_x: tuple[int, ...],
    alpha_xi: tuple[int, ...]
) -> np.ndarray:
    """
    Tensor-product central difference of d^alpha_xi d^alpha_x f at (x, xi).

    Steps are eps^(1/(2+m)) * max(1, |coordinate|) with m the total
    derivative order, which balances truncation against rounding.

    Args:
        f (SymbolFunction): Vectorized function (..., d), (..., d) -> (..., N, N).
        x (np.ndarray): Points, shape (..., d).
        xi (np.ndarray): Covectors, shape (..., d).
        alpha_x (tuple[int, ...]): Derivative order per x axis.
        alpha_xi (tuple[int, ...]): Derivative order per xi axis.

    Returns:
        np.ndarray: Derivative values with the shape of f(x, xi).
    """
    x, xi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
    total = sum(alpha_x) + sum(alpha_xi)
    if total == 0:
        return np.asarray(f(x, xi), dtype=complex)
    base = MACHINE_EPS ** (1.0 / (2.0 + total))
    axes = []
    for j, k in enumerate(alpha_x):
        if k:
            axes.append(('x', j, k, _axis_steps(x[..., j], base)))
    for j, k in enumerate(alpha_xi):
        if k:
            axes.append(('xi', j, k, _axis_steps(xi[..., j], base)))

    result = None
    for stencil in itertools.product(*[_central_stencil(k) for _, _, k, _ in axes]):
        shifted_x = x.copy()
        shifted_xi = xi.copy()
        weight = 1.0
        for (kind, j, _, step), (offset, coefficient) in zip(axes, stencil):
            target = shifted_x if kind == 'x' else shifted_xi
            target[..., j] += offset * step
            weight *= coefficient
        term = weight * np.asarray(f(shifted_x, shifted_xi), dtype=complex)
        result = term if result is None else result + term

    scale = np.ones(x.shape[:-1])
    for _, _, k, step in axes:
        scale = scale * step ** k
    return result / scale[..., None, None]


def mixed_xi_x_sum(f: SymbolFunction, x: np.ndarray, xi: np.ndarray, step: float) -> np.ndarray:
    """
    Sum over j of d_xi_j d_x_j f by the four-point central stencil with a fixed step.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    total = None
    for j in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[j] = step
        value = (
            f(x + e, xi + e) - f(x + e, xi - e) - f(x - e, xi + e) + f(x - e, xi - e)
        ) / (4.0 * step * step)
        total = value if total is None else total + value
    return total


def richardson_mixed_xi_x_sum(f: SymbolFunction, x: np.ndarray, xi: np.ndarray, step: float) -> np.ndarray:
    """One Richardson step on mixed_xi_x_sum: (4 D(h/2) - D(h)) / 3."""
    coarse = mixed_xi_x_sum(f, x, xi, step)
    fine = mixed_xi_x_sum(f, x, xi, step / 2.0)
    return (4.0 * fine - coarse) / 3.0


def polynomial_derivative(terms: dict, alpha_x: tuple[int, ...], alpha_xi: tuple[int, ...]) -> dict:
    """
    Exact d^alpha_xi d^alpha_x of a polynomial {(x exponents, xi exponents): coefficient}.
    """
    result: dict = {}
    for (px, pxi), coefficient in terms.items():
        factor = 1.0
        new_px, new_pxi = list(px), list(pxi)
        for j, k in enumerate(alpha_x):
            if k > new_px[j]:
                factor = 0.0
                break
            for m in range(k):
                factor *= new_px[j] - m
            new_px[j] -= k
        if factor:
            for j, k in enumerate(alpha_xi):
                if k > new_pxi[j]:
                    factor = 0.0
                    break
                for m in range(k):
                    factor *= new_pxi[j] - m
                new_pxi[j] -= k
        if not factor:
            continue
        key = (tuple(new_px), tuple(new_pxi))
        result[key] = result.get(key, 0) + factor * np.asarray(coefficient, dtype=complex)
    return result
