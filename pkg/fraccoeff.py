"""
Sixth-order fractional difference coefficients g_m for the Riesz derivative.

The coefficients are the Laurent coefficients of the generating function

    G(w) = (2 - w - 1/w)^(gamma/2) [1 + gamma/24 (2 - w - 1/w) + gamma(5 gamma + 22)/5760 (2 - w - 1/w)^2]

and are evaluated through their Gamma-function closed form. The FFT quadrature
of the Fourier integral is kept as an independent check only.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sp_fft
from scipy.special import gammaln

from constants import GAMMA_STAR_GUESS, GAMMA_STAR_TOL, NEWTON_MAX_ITER

# p1(gamma) = 5 g^5 + 132 g^4 + 1415 g^3 + 6900 g^2 + 9380 g - 34032, highest power first
P1_COEFFS = (5.0, 132.0, 1415.0, 6900.0, 9380.0, -34032.0)

# Exact limit at gamma = 2, the classical sixth-order stencil for u''
GAMMA_TWO_STENCIL = {0: 49.0 / 18.0, 1: -3.0 / 2.0, 2: 3.0 / 20.0, 3: -1.0 / 90.0}

METHODS = ("closed_form", "quadrature")


class GammaDomainError(ValueError):
    pass


def check_gamma(gamma: float, allow_subunit: bool = True) -> float:
    """Validate a fractional order and return it as a float."""
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma > 2.0 or gamma <= 0.0:
        raise GammaDomainError(f"gamma={gamma} is outside (0, 1) U (1, 2]")
    if gamma == 1.0:
        raise GammaDomainError("gamma=1 is excluded: the Riesz prefactor 1/cos(pi*gamma/2) is singular there")
    if not allow_subunit and gamma < 1.0:
        raise GammaDomainError(f"gamma={gamma} is outside (1, 2]")
    return gamma


def _bracket(gamma: float, m: np.ndarray) -> np.ndarray:
    q2 = gamma * (gamma + 1) * (gamma + 2) / (6.0 * (gamma - 2 * m + 2) * (gamma + 2 * m + 2))
    q3 = (
        gamma
        * (gamma + 1)
        * (gamma + 2)
        * (gamma + 3)
        * (gamma + 4)
        * (5 * gamma + 22)
        / (360.0 * (gamma - 2 * m + 4) * (gamma - 2 * m + 2) * (gamma + 2 * m + 4) * (gamma + 2 * m + 2))
    )
    return 1.0 + q2 + q3


def _prefactor(gamma: float, m: np.ndarray) -> np.ndarray:
    """
    (-1)^m Gamma(gamma+1) / (Gamma(gamma/2 - m + 1) Gamma(gamma/2 + m + 1)) for m >= 0.

    For m >= 2 the argument gamma/2 - m + 1 is <= 0 and the reflection identity

        1/Gamma(z) = sin(pi z) Gamma(1 - z) / pi,   sin(pi z) = (-1)^(m+1) sin(pi gamma/2)

    turns the term into -Gamma(gamma+1) sin(pi gamma/2) Gamma(m - gamma/2) / (pi Gamma(m + gamma/2 + 1)),
    which is evaluated in log space with its sign carried separately.
    """
    half = 0.5 * gamma
    out = np.empty(m.shape, dtype=float)

    low = m <= 1
    ml = m[low]
    log_low = gammaln(gamma + 1) - gammaln(half - ml + 1) - gammaln(half + ml + 1)
    out[low] = np.where(ml % 2 == 0, 1.0, -1.0) * np.exp(log_low)

    high = ~low
    mh = m[high].astype(float)
    log_high = gammaln(gamma + 1) + gammaln(mh - half) - gammaln(mh + half + 1) - np.log(np.pi)
    out[high] = -np.sin(np.pi * half) * np.exp(log_high)
    return out


def _closed_form_nonnegative(gamma: float, m: np.ndarray) -> np.ndarray:
    if gamma == 2.0:
        return np.array([GAMMA_TWO_STENCIL.get(int(k), 0.0) for k in m], dtype=float)
    return _prefactor(gamma, m) * _bracket(gamma, m.astype(float))


def coefficient_closed_form(gamma: float, m: int) -> float:
    """
    Return g_m^(gamma) from the Gamma-function closed form.

    Args:
        gamma (float): fractional order in (0, 1) U (1, 2].
        m (int): any integer index; g_m is even in m.

    Raises:
        GammaDomainError: if gamma is outside the admissible set.
    """
    gamma = check_gamma(gamma)
    return float(_closed_form_nonnegative(gamma, np.array([abs(int(m))]))[0])


def generating_function_value(gamma: float, z):
    """Symbol of K_gamma, [1 + gamma/6 sin^2 + gamma(5 gamma+22)/360 sin^4] (4 sin^2(z/2))^(gamma/2)."""
    gamma = check_gamma(gamma)
    s2 = np.sin(0.5 * np.asarray(z, dtype=float)) ** 2
    value = (1.0 + gamma / 6.0 * s2 + gamma * (5 * gamma + 22) / 360.0 * s2**2) * (4.0 * s2) ** (0.5 * gamma)
    return float(value) if np.ndim(value) == 0 else value


@lru_cache(maxsize=4)
def _quadrature_coefficients(gamma: float, n_samples: int) -> np.ndarray:
    s = 2.0 * np.pi * np.arange(n_samples) / n_samples
    return sp_fft.fft(generating_function_value(gamma, s)).real / n_samples


def coefficient_quadrature(gamma: float, m: int, n_samples: int) -> float:
    """
    Trapezoidal (FFT) evaluation of (1/2pi) int G(e^{is}) e^{-ims} ds.

    Test oracle only: the symbol has an |s|^gamma cusp at s = 0, so the rule converges
    algebraically and n_samples has to be large.
    """
    gamma = check_gamma(gamma)
    n_samples = int(n_samples)
    if n_samples < 2**14 or n_samples & (n_samples - 1):
        raise ValueError(f"n_samples={n_samples} must be a power of two >= 2**14")
    return float(_quadrature_coefficients(gamma, n_samples)[int(m) % n_samples])


def p1(gamma: float) -> float:
    return float(np.polyval(P1_COEFFS, gamma))


def gamma_star() -> float:
    """Root of p1 in (1, 2]: the order at which g_{+-2} changes sign."""
    dp1 = np.polyder(np.array(P1_COEFFS))
    g = GAMMA_STAR_GUESS
    for _ in range(NEWTON_MAX_ITER):
        value = p1(g)
        if abs(value) <= GAMMA_STAR_TOL:
            return g
        step = value / np.polyval(dp1, g)
        g -= step
        # |p1| cannot drop below the rounding floor of its ~3e4 sized terms
        if abs(step) <= 4 * np.finfo(float).eps * abs(g):
            return g
    raise RuntimeError(f"Newton iteration for gamma* did not converge in {NEWTON_MAX_ITER} steps")


GAMMA_STAR = gamma_star()


@dataclass(frozen=True)
class CoefficientTable:
    gamma: float
    m_max: int
    values: np.ndarray
    method: str = "closed_form"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method}")
        if self.values.shape != (2 * self.m_max + 1,):
            raise ValueError(f"values must hold 2*m_max+1={2 * self.m_max + 1} entries")

    def __getitem__(self, m: int) -> float:
        if abs(m) > self.m_max:
            raise IndexError(f"|m|={abs(m)} exceeds m_max={self.m_max}")
        return float(self.values[m + self.m_max])

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.m_max, self.m_max + 1)

    @property
    def one_sided(self) -> np.ndarray:
        """g_0, g_1, ..., g_{m_max}: the first column of K_gamma."""
        return self.values[self.m_max :]

    def partial_sum(self) -> float:
        return float(np.sum(self.values))


@lru_cache(maxsize=256)
def coefficient_table(gamma: float, m_max: int) -> CoefficientTable:
    """
    Coefficients g_{-m_max..m_max}, computed once per (gamma, m_max) and mirrored so the table is exactly even.
    """
    gamma = check_gamma(gamma)
    m_max = int(m_max)
    if m_max < 0:
        raise ValueError(f"m_max={m_max} must be non-negative")
    half = _closed_form_nonnegative(gamma, np.arange(m_max + 1))
    values = np.concatenate([half[:0:-1], half])
    values.setflags(write=False)
    logging.debug(f"Built coefficient table gamma={gamma}, m_max={m_max}")
    return CoefficientTable(gamma=gamma, m_max=m_max, values=values)
