"""
Discrete Riesz operator A^(d) = -eps^2 D_gamma^(d) on the interior nodes of a uniform box grid.

K_gamma is the symmetric Toeplitz matrix with entries g_{j-i}. The d-dimensional operator is the
Kronecker sum of K_gamma along each axis and is never materialized: it is applied axis by axis,
either with the dense matrix or with a circulant embedding and a batched real FFT.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sp_fft
import scipy.linalg

from constants import DENSE_LIMIT, H_MATCH_TOL, SPECTRAL_LIMIT
from fraccoeff import GAMMA_STAR, CoefficientTable, check_gamma, coefficient_table, generating_function_value

PATHS = ("dense", "fft")


class GridMismatchError(ValueError):
    pass


class SizeGuardError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    M: int
    d: int = 1
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 4:
            raise ValueError(f"M={self.M} must be an integer >= 4")
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension d={self.d} must be 1, 2 or 3")
        if not self.b > self.a:
            raise ValueError(f"domain [{self.a}, {self.b}] is empty")

    @classmethod
    def from_h(cls, h: float, d: int = 1, a: float = 0.0, b: float = 1.0, tol: float = H_MATCH_TOL) -> "GridSpec":
        if not h > 0:
            raise ValueError(f"h={h} must be positive")
        M = int(round((b - a) / h))
        if M < 1:
            raise ValueError(f"h={h} is wider than the domain [{a}, {b}]")
        if abs((b - a) / M - h) > tol * h:
            raise ValueError(f"h={h} does not divide [{a}, {b}] into a whole number of cells")
        return cls(M=M, d=d, a=a, b=b)

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.M

    @property
    def n(self) -> int:
        """Interior nodes per axis."""
        return self.M - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def nodes(self) -> np.ndarray:
        """Interior coordinates along one axis, x_j = a + j h for j = 1..M-1."""
        return self.closed_nodes()[1:-1]

    def closed_nodes(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.M + 1)

    def mesh(self) -> list[np.ndarray]:
        """Interior coordinates of every node, one flat array per axis, in lexicographic order."""
        axes = np.meshgrid(*([self.nodes()] * self.d), indexing="ij")
        return [axis.ravel() for axis in axes]


@dataclass
class StateField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.shape != (self.grid.size,):
            raise GridMismatchError(f"field has {self.values.size} values, grid expects {self.grid.size}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def zeros(cls, grid: GridSpec) -> "StateField":
        return cls(grid, np.zeros(grid.size))

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def inner(self, other: "StateField") -> float:
        """Discrete L2 inner product h^d sum u_j v_j."""
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")
        return float(self.grid.cell_volume * np.dot(self.values, other.values))

    def l2_norm(self) -> float:
        return float(np.sqrt(self.inner(self)))

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


class SymmetricToeplitz:
    """
    Symmetric Toeplitz matrix T_ij = c_|i-j| held by its first column, applied along one axis of an array.

    The fft path embeds T in a circulant of size the next power of two >= 2n with first column
    [c_0, c_1, ..., c_{n-1}, 0, ..., 0, c_{n-1}, ..., c_1].
    """

    def __init__(self, column: np.ndarray):
        column = np.asarray(column, dtype=float)
        if column.ndim != 1 or column.size == 0:
            raise ValueError(f"column shape {column.shape} is not a non-empty vector")
        self.column = column
        self.n = column.size
        self.embed_size = 1 << int(np.ceil(np.log2(2 * self.n)))
        embedding = np.zeros(self.embed_size)
        embedding[: self.n] = column
        embedding[self.embed_size - self.n + 1 :] = column[:0:-1]
        self.symbol_hat = sp_fft.rfft(embedding)

    @cached_property
    def dense(self) -> np.ndarray:
        if self.n > DENSE_LIMIT:
            raise SizeGuardError(f"dense Toeplitz of size {self.n} exceeds the limit {DENSE_LIMIT}")
        matrix = scipy.linalg.toeplitz(self.column)
        matrix.setflags(write=False)
        return matrix

    def along_axis(self, x: np.ndarray, axis: int, path: str = "fft") -> np.ndarray:
        xt = np.moveaxis(x, axis, -1)
        if path == "dense":
            y = xt @ self.dense
        elif path == "fft":
            spectrum = sp_fft.rfft(xt, n=self.embed_size, axis=-1)
            y = sp_fft.irfft(spectrum * self.symbol_hat, n=self.embed_size, axis=-1)[..., : self.n]
        else:
            raise ValueError(f"unknown path {path}, expected one of {PATHS}")
        return np.moveaxis(y, -1, axis)


@dataclass(frozen=True)
class RieszOperator:
    grid: GridSpec
    gamma: float
    epsilon: float
    coeffs: CoefficientTable
    fft_context: SymmetricToeplitz

    @classmethod
    def build(cls, grid: GridSpec, gamma: float, epsilon: float) -> "RieszOperator":
        gamma = check_gamma(gamma, allow_subunit=False)
        if not epsilon >= 0:
            raise ValueError(f"epsilon={epsilon} must be non-negative")
        coeffs = coefficient_table(gamma, grid.n - 1)
        logging.debug(f"Built Riesz operator gamma={gamma}, eps={epsilon}, M={grid.M}, d={grid.d}")
        return cls(grid, gamma, float(epsilon), coeffs, SymmetricToeplitz(coeffs.one_sided))

    @property
    def scale(self) -> float:
        """eps^2 / h^gamma."""
        return self.epsilon**2 / self.grid.h**self.gamma

    def matvec(self, values: np.ndarray, path: str = "fft") -> np.ndarray:
        """A^(d) applied to a flat array of interior values."""
        x = np.asarray(values, dtype=float).reshape(self.grid.shape)
        y = np.zeros_like(x)
        for axis in range(self.grid.d):
            y += self.fft_context.along_axis(x, axis, path)
        return self.scale * y.ravel()


def assemble_dense_1d(op: RieszOperator) -> np.ndarray:
    """K_gamma as a dense (M-1)x(M-1) matrix with entry (i, j) = g_{j-i}."""
    return op.fft_context.dense


def dense_A(op: RieszOperator) -> np.ndarray:
    """Dense A^(1) = (eps^2/h^gamma) K_gamma."""
    return op.scale * assemble_dense_1d(op)


def apply_A(op: RieszOperator, v: StateField, path: str = "fft") -> StateField:
    if v.grid != op.grid:
        raise GridMismatchError(f"field grid {v.grid} does not match operator grid {op.grid}")
    return StateField(op.grid, op.matvec(v.values, path))


def apply_riesz_formula(gamma: float, h: float, samples, path: str = "dense") -> np.ndarray:
    """
    Sixth-order approximation of the Riesz derivative at the interior nodes,

        delta u(x_j) = -h^(-gamma) sum_m g_m u(x_j - m h),

    with u extended by zero outside the sampled interval.

    Args:
        gamma (float): fractional order in (0, 1) U (1, 2].
        h (float): mesh width.
        samples: u at the M+1 closed-grid nodes; both endpoint values must vanish.
    """
    gamma = check_gamma(gamma)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size < 3:
        raise ValueError("samples must be a vector over at least three closed-grid nodes")
    scale = np.max(np.abs(samples)) if samples.size else 0.0
    if max(abs(samples[0]), abs(samples[-1])) > 1e-14 * max(scale, 1.0):
        raise ValueError("samples must vanish at both endpoints")
    interior = samples[1:-1]
    toeplitz = SymmetricToeplitz(coefficient_table(gamma, interior.size - 1).one_sided)
    return -(h ** (-gamma)) * toeplitz.along_axis(interior, 0, path)


def _bound_coefficient(op: RieszOperator) -> float:
    g = op.coeffs
    return g[0] if op.gamma <= GAMMA_STAR else g[0] + 2 * g[2]


def eigenvalue_bound(op: RieszOperator) -> float:
    """
    Gerschgorin upper bound on the eigenvalues of A^(d).

    In 1D this is (2 eps^2/h^gamma) g_0 for gamma <= gamma* and (2 eps^2/h^gamma)(g_0 + 2 g_2) above.
    For d > 1 the 1D bound is multiplied by d (Kronecker sum of d commuting terms).
    """
    return op.grid.d * 2.0 * op.scale * _bound_coefficient(op)


def eigenvalue_bound_label(op: RieszOperator) -> str:
    return "gerschgorin" if op.grid.d == 1 else "derived, Kronecker sum"


def symbol_bound(op: RieszOperator) -> float:
    """Spectrum of A^(d) lies in (0, d (eps^2/h^gamma) max_z g(gamma, z)); the maximum sits at z = pi."""
    return op.grid.d * op.scale * generating_function_value(op.gamma, np.pi)


def energy_stability_tau_bound(op: RieszOperator) -> float:
    """Largest step for which the discrete energy is guaranteed not to grow, 4 / (1 + sqrt(1 + 8 lambda_max))."""
    return 4.0 / (1.0 + np.sqrt(1.0 + 8.0 * eigenvalue_bound(op)))


def _dense_eigenvalues_1d(op: RieszOperator) -> np.ndarray:
    if op.grid.n > SPECTRAL_LIMIT:
        raise SizeGuardError(f"dense eigensolve of size {op.grid.n} exceeds the limit {SPECTRAL_LIMIT}")
    return scipy.linalg.eigvalsh(dense_A(op))


def spectral_radius_B(op: RieszOperator, tau: float) -> float:
    """
    Spectral radius of B = (I + tau/2 A)^-1 (I - tau/2 A).

    |1 - x| / (1 + x) falls then rises on x >= 0, so only the extreme eigenvalues of A^(d),
    d times the extreme 1D ones, can attain the maximum.
    """
    lam = _dense_eigenvalues_1d(op)
    extremes = 0.5 * tau * op.grid.d * np.array([lam[0], lam[-1]])
    return float(np.max(np.abs(1.0 - extremes) / (1.0 + extremes)))


def infinity_norm_B(op: RieszOperator, tau: float) -> float:
    """Measured max-row-sum norm of B in 1D. Reported only: no bound below 1 is claimed for it."""
    if op.grid.d != 1:
        raise ValueError("infinity_norm_B is only available for d = 1")
    if op.grid.n > SPECTRAL_LIMIT:
        raise SizeGuardError(f"dense B of size {op.grid.n} exceeds the limit {SPECTRAL_LIMIT}")
    half = 0.5 * tau * dense_A(op)
    eye = np.eye(op.grid.n)
    B = scipy.linalg.solve(eye + half, eye - half, assume_a="pos")
    return float(np.linalg.norm(B, np.inf))
