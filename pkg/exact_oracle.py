"""
Exact Riesz derivatives of polynomials on [0, 1] extended by zero, the test functions of the
convergence studies, and the manufactured source for the forced Allen-Cahn problem.
"""

from dataclasses import dataclass
from math import comb
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import gamma as gamma_fn
from scipy.special import rgamma

from constants import RANDOM_INITIAL_SEED
from fraccoeff import check_gamma
from riesz_op import GridSpec, StateField

INITIALS = ("poly4", "poly6_decay", "maxprinciple", "random")


@dataclass(frozen=True)
class PolySpec:
    """
    u(x) = sum_k coeffs[k] x^k on [0, 1], zero outside. Integer coefficients stay exact Python ints.

    Polynomials built from a power product keep the exponents (p, q) and are sampled as x^p (1-x)^q;
    the expanded form loses about 1e-16 absolute to cancellation.
    """

    coeffs: tuple
    factors: Optional[tuple] = None

    @classmethod
    def from_power_product(cls, p: int, q: int) -> "PolySpec":
        """x^p (1-x)^q expanded with exact binomial coefficients."""
        coeffs = [0] * (p + q + 1)
        for j in range(q + 1):
            coeffs[p + j] = (-1) ** j * comb(q, j)
        return cls(tuple(coeffs), factors=(p, q))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        if self.factors is not None:
            p, q = self.factors
            x = np.asarray(x, dtype=float)
            return x**p * (1.0 - x) ** q
        return P.polyval(np.asarray(x, dtype=float), np.array(self.coeffs, dtype=float))

    def reflected(self) -> "PolySpec":
        """Coefficients of u(1 - y) in powers of y."""
        out = [0] * len(self.coeffs)
        for k, c in enumerate(self.coeffs):
            for j in range(k + 1):
                out[j] += c * comb(k, j) * (-1) ** j
        return PolySpec(tuple(out), factors=None if self.factors is None else self.factors[::-1])

    def second_derivative(self) -> "PolySpec":
        return PolySpec(tuple(P.polyder(np.array(self.coeffs, dtype=float), 2)))

    def vanishes_at_endpoints(self) -> bool:
        return self.coeffs[0] == 0 and sum(self.coeffs) == 0


ZERO = PolySpec((0,))
POLY4 = PolySpec.from_power_product(4, 4)
POLY6 = PolySpec.from_power_product(6, 6)


def _one_sided_sum(coeffs, gamma: float, y: np.ndarray) -> np.ndarray:
    # sum_k c_k Gamma(k+1)/Gamma(k+1-gamma) y^(k-gamma): the Riemann-Liouville derivative of sum_k c_k y^k
    k = np.arange(len(coeffs), dtype=float)
    weights = np.array(coeffs, dtype=float) * gamma_fn(k + 1) * rgamma(k + 1 - gamma)
    return np.power.outer(y, k - gamma) @ weights


def riesz_derivative_poly(p: PolySpec, gamma: float, x):
    """
    Riesz derivative of order gamma of the zero-extended polynomial p at x in (0, 1),

        -1 / (2 cos(pi gamma / 2)) [left RL derivative + right RL derivative],

    where the right derivative is taken from the expansion of p in powers of (1 - x).

    Raises:
        GammaDomainError: at gamma == 1, where cos(pi gamma / 2) vanishes.
        ValueError: if any x is not strictly inside (0, 1).
    """
    gamma = check_gamma(gamma)
    x_arr = np.asarray(x, dtype=float)
    if np.any((x_arr <= 0.0) | (x_arr >= 1.0)):
        raise ValueError("the Riesz derivative oracle is only defined for x in (0, 1)")
    y = np.atleast_1d(x_arr)
    prefactor = -1.0 / (2.0 * np.cos(0.5 * np.pi * gamma))
    value = prefactor * (_one_sided_sum(p.coeffs, gamma, y) + _one_sided_sum(p.reflected().coeffs, gamma, 1.0 - y))
    return float(value[0]) if x_arr.ndim == 0 else value.reshape(x_arr.shape)


def manufactured_solution(x, t: float):
    """u(x, t) = exp(-t) x^6 (1-x)^6."""
    return np.exp(-t) * POLY6(x)


def manufactured_source(x, t: float, gamma: float, epsilon: float):
    """
    s = u_t - eps^2 L u - u + u^3 for u = exp(-t) x^6 (1-x)^6, so that u solves the forced equation exactly.
    """
    u = manufactured_solution(x, t)
    return -2.0 * u + u**3 - epsilon**2 * np.exp(-t) * riesz_derivative_poly(POLY6, gamma, x)


def manufactured_source_field(grid: GridSpec, gamma: float, epsilon: float):
    """Source sampled at the interior nodes of a 1D grid on [0, 1], as a function of t."""
    if grid.d != 1 or grid.a != 0.0 or grid.b != 1.0:
        raise ValueError("the manufactured problem is posed on the 1D interval [0, 1]")
    x = grid.nodes()
    profile = POLY6(x)
    diffusion = epsilon**2 * riesz_derivative_poly(POLY6, gamma, x)

    def source(t: float) -> np.ndarray:
        decay = np.exp(-t)
        return -2.0 * decay * profile + (decay * profile) ** 3 - decay * diffusion

    return source


def _profile(name: str, x: np.ndarray, gamma: float) -> np.ndarray:
    if name == "poly4":
        return POLY4(x)
    if name == "poly6_decay":
        return POLY6(x)
    if name == "maxprinciple":
        power = 3.5 + gamma
        return (x * (1.0 - x)) ** power * np.sin(np.pi * x)
    raise ValueError(f"unknown initial condition {name}, expected one of {INITIALS}")


def example_initials(name: str, grid: GridSpec, gamma: float, seed: int = RANDOM_INITIAL_SEED) -> StateField:
    """
    Sample a named initial condition at the interior nodes.

    Coordinates are mapped to [0, 1] first. For d > 1 the field is the tensor product of the 1D profile.
    "random" draws every node independently from U(-1, 1) with `seed`.
    """
    gamma = check_gamma(gamma)
    if name == "random":
        return StateField(grid, np.random.default_rng(seed).uniform(-1.0, 1.0, grid.size))
    mesh = grid.mesh()
    values = np.ones(grid.size)
    for axis in mesh:
        values *= _profile(name, (axis - grid.a) / (grid.b - grid.a), gamma)
    return StateField(grid, values)
