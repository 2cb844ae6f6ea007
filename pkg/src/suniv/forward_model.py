"""Data model: grids, smoothing operators, noise, and the wavelet prior.

The continuous model is the white-noise regression dY = Tf dx + sigma dW on
the torus [0, 1)^d, discretized on a uniform n^d grid.  T is a translation
invariant operator given by a Fourier symbol on the integer frequency
lattice (angular frequency xi = 2 pi k), applied by FFT multiplication.
White noise is realized per grid point with standard deviation
sigma * h^{-d/2}, so that quadrature inner products with unit-L2-norm test
functions have variance sigma^2.

Random functions are drawn from a Gaussian wavelet prior: coefficients
alpha_{j,k,e} ~ N(0, L^2 2^{j(d-2s)}) for detail levels j = 0..J_max plus a
single N(0, L^2) coarse coefficient, synthesized through the inverse DWT and
evaluated on the grid with the sampled father wavelet.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from suniv.tensor_ops import DTensor
from suniv.wavelets import (
    WaveletCoefficients,
    daubechies_filters,
    dwt_inverse,
    sample_father_wavelet,
)

__all__ = [
    "Grid",
    "SmoothingOperator",
    "PriorParams",
    "TrainingSet",
    "SingularOperatorError",
    "identity_operator",
    "sobolev_operator",
    "custom_operator",
    "apply",
    "vaguelette",
    "vaguelette_biorthogonality_error",
    "add_white_noise",
    "sample_prior",
    "prior_second_moment",
    "make_training_set",
    "grid_synthesis",
    "grid_analysis",
    "quadrature_norm",
    "quadrature_inner",
    "make_rng",
    "operator_from_descriptor",
    "save_training_set",
    "load_training_set",
]


class SingularOperatorError(ValueError):
    """Raised when a Fourier symbol vanishes somewhere on the grid."""


def make_rng(seed, stream=()):
    """Counter-based Philox generator for a (seed, stream) pair.

    Distinct streams under the same seed are statistically independent and
    reproducible regardless of evaluation order.
    """
    if isinstance(stream, (int, np.integer)):
        stream = (int(stream),)
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(t) for t in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Grid:
    """Uniform grid with n points per axis on the torus [0, 1)^d."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError("n must be a power of two >= 2")

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def size(self):
        return self.n ** self.dim

    @property
    def max_level(self):
        return int(math.log2(self.n))

    def points(self):
        """Coordinate arrays of the grid points (1-d array, or two via meshgrid)."""
        x = np.arange(self.n) * self.h
        if self.dim == 1:
            return x
        return np.meshgrid(x, x, indexing="ij")


def quadrature_norm(f, grid):
    """Quadrature L2 norm h^{d/2} ||f||_2 of grid samples."""
    return float(np.sqrt(grid.h ** grid.dim * np.sum(np.asarray(f) ** 2)))


def quadrature_inner(f, g, grid):
    """Quadrature L2 inner product of two sample arrays."""
    return float(grid.h ** grid.dim * np.sum(np.asarray(f) * np.asarray(g)))


def _xi_squared(grid):
    k = np.fft.fftfreq(grid.n) * grid.n
    xi2 = (2.0 * math.pi * k) ** 2
    if grid.dim == 1:
        return xi2
    return xi2[:, None] + xi2[None, :]


def sobolev_norm(f, grid, r):
    """Discrete Sobolev H^r norm from trapezoidal Fourier coefficients.

    Computes sqrt(sum_k (1 + |xi_k|^2)^r |c_k|^2) with c_k = h^d fft(f)_k and
    xi_k = 2 pi k.  For r = 0 this equals quadrature_norm by Parseval.
    """
    c = grid.h ** grid.dim * np.fft.fftn(np.asarray(f, dtype=float))
    weights = (1.0 + _xi_squared(grid)) ** float(r)
    return float(math.sqrt(np.sum(weights * np.abs(c) ** 2)))


@dataclass
class SmoothingOperator:
    """Translation invariant operator with a real, even Fourier symbol.

    ``beta`` is the smoothing order; ``a1 <= a2`` are the envelope constants
    min/max over the grid of |symbol(xi)| (1 + |xi|^2)^{beta/2}, and ``C_T``
    the operator norm max |symbol|.
    """

    grid: Grid
    kind: str
    symbol: np.ndarray
    beta: float
    a1: float
    a2: float
    C_T: float
    L: int | None = None

    def descriptor(self):
        d = {"kind": self.kind, "beta": self.beta}
        if self.kind == "sobolev":
            d["L"] = self.L
        elif self.kind == "custom":
            d["symbol"] = self.symbol.tolist()
        return d


def _envelope_constants(symbol, beta, grid):
    w = np.abs(symbol) * (1.0 + _xi_squared(grid)) ** (beta / 2.0)
    return float(w.min()), float(w.max())


def identity_operator(grid):
    sym = np.ones(grid.shape)
    return SmoothingOperator(grid, "identity", sym, 0.0, 1.0, 1.0, 1.0)


def sobolev_operator(grid, L):
    """Symbol (1 + |xi|^2)^{-L}: a 2L-smoothing operator with a1 = a2 = 1."""
    if L < 1 or int(L) != L:
        raise ValueError("L must be a positive integer")
    sym = (1.0 + _xi_squared(grid)) ** (-float(L))
    return SmoothingOperator(grid, "sobolev", sym, 2.0 * L, 1.0, 1.0, 1.0, L=int(L))


def custom_operator(grid, symbol, beta):
    """Operator from an explicit FFT-ordered symbol array."""
    sym = np.asarray(symbol, dtype=float)
    if sym.shape != grid.shape:
        raise ValueError("symbol shape does not match grid")
    _check_invertible(sym)
    rev = tuple((-np.arange(m)) % m for m in sym.shape)
    mirrored = sym[np.ix_(*rev)] if grid.dim == 2 else sym[rev[0]]
    if not np.allclose(sym, mirrored, atol=1e-12 * np.max(np.abs(sym))):
        raise ValueError("symbol must be even: symbol(-xi) = symbol(xi)")
    a1, a2 = _envelope_constants(sym, beta, grid)
    return SmoothingOperator(grid, "custom", sym, float(beta), a1, a2, float(np.max(np.abs(sym))))


def _check_invertible(symbol):
    # only exact zeros are singular; heavily smoothing symbols get tiny but
    # stay invertible, and the division is checked for overflow at use sites
    if float(np.min(np.abs(symbol))) == 0.0:
        raise SingularOperatorError("operator symbol vanishes on the grid")


def operator_from_descriptor(desc, grid):
    kind = desc["kind"]
    if kind == "identity":
        return identity_operator(grid)
    if kind == "sobolev":
        return sobolev_operator(grid, desc["L"])
    if kind == "custom":
        return custom_operator(grid, np.asarray(desc["symbol"]), desc["beta"])
    raise ValueError(f"unknown operator kind {kind!r}")


def apply(op, f):
    """Apply the operator to grid samples by Fourier multiplication."""
    f = np.asarray(f, dtype=float)
    if f.shape != op.grid.shape:
        raise ValueError("sample shape does not match operator grid")
    return np.fft.ifftn(np.fft.fftn(f) * op.symbol).real


def vaguelette(op, M, J):
    """Grid samples of the vaguelette psi with T* psi = 2^{Jd/2} phi(2^J .).

    For the identity operator this is the sampled scaled father itself.
    """
    grid = op.grid
    _check_invertible(op.symbol)
    phi = sample_father_wavelet(M, J, grid.n, grid.dim)
    psi = np.fft.ifftn(np.fft.fftn(phi) / np.conj(op.symbol)).real
    if not np.all(np.isfinite(psi)):
        raise SingularOperatorError("symbol too small to invert in floating point")
    return psi


def vaguelette_biorthogonality_error(op, M, J):
    """max_{k,k'} |<T phi_{J,k',0}, psi_k> - delta_{k,k'}| by quadrature."""
    grid = op.grid
    psi = vaguelette(op, M, J)
    tphi = apply(op, sample_father_wavelet(M, J, grid.n, grid.dim))
    stride = grid.n // 2 ** J
    nk = 2 ** J
    err = 0.0
    shifts = [(k,) for k in range(nk)] if grid.dim == 1 else [
        (k1, k2) for k1 in range(nk) for k2 in range(nk)
    ]
    for kp in shifts:
        lhs = np.fft.ifftn(np.fft.fftn(np.roll(tphi, [s * stride for s in kp],
                                                axis=tuple(range(grid.dim))))
                           * np.conj(np.fft.fftn(psi))).real * grid.h ** grid.dim
        take = lhs[tuple(slice(None, None, stride) for _ in range(grid.dim))]
        want = np.zeros_like(take)
        want[kp] = 1.0
        err = max(err, float(np.max(np.abs(take - want))))
    return err


def add_white_noise(f, sigma, grid, rng):
    """Observation samples f + sigma h^{-d/2} eps with iid standard eps."""
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError("sample shape does not match grid")
    scale = sigma * grid.h ** (-grid.dim / 2.0)
    return f + scale * rng.standard_normal(grid.shape)


@dataclass(frozen=True)
class PriorParams:
    """Gaussian wavelet prior with smoothness s, amplitude L, depth J_max."""

    s: float
    L: float
    J_max: int
    M: int = 3

    def __post_init__(self):
        if self.s <= 0 or self.L <= 0:
            raise ValueError("s and L must be positive")
        if self.J_max < 0:
            raise ValueError("J_max must be nonnegative")

    def descriptor(self):
        return {"s": self.s, "L": self.L, "J_max": self.J_max, "M": self.M}


def _draw_coefficients(prior, dim, rng):
    nd = 2 ** dim - 1
    coarse = DTensor(prior.L * rng.standard_normal((1,) * dim))
    details = []
    for j in range(prior.J_max + 1):
        std = prior.L * 2.0 ** (j * (dim - 2.0 * prior.s) / 2.0)
        shape = (2 ** j,) * dim
        details.append([DTensor(std * rng.standard_normal(shape)) for _ in range(nd)])
    return WaveletCoefficients(coarse, details, periodic=True)


def sample_prior(prior, grid, rng):
    """One random function drawn from the prior, as grid samples."""
    top = prior.J_max + 1
    if 2 ** top > grid.n:
        raise ValueError("grid too coarse for the prior depth: need 2^(J_max+1) <= n")
    bank = daubechies_filters(prior.M, grid.dim)
    s_top = dwt_inverse(_draw_coefficients(prior, grid.dim, rng), bank)
    phi = sample_father_wavelet(prior.M, top, grid.n, grid.dim)
    return grid_synthesis(s_top.values, phi, top, grid)


def prior_second_moment(prior, dim):
    """Exact E ||f||_{L2}^2 of the prior by Parseval."""
    nd = 2 ** dim - 1
    total = prior.L ** 2
    for j in range(prior.J_max + 1):
        total += nd * 2 ** (j * dim) * prior.L ** 2 * 2.0 ** (j * (dim - 2.0 * prior.s))
    return total


def grid_synthesis(coeff_values, phi, J, grid):
    """Sum_k c_k phi(. - k 2^{-J}) evaluated on the grid (circular)."""
    coeff_values = np.asarray(coeff_values, dtype=float)
    if coeff_values.shape != (2 ** J,) * grid.dim:
        raise ValueError("coefficient shape must be (2^J,)^d")
    stride = grid.n // 2 ** J
    up = np.zeros(grid.shape)
    up[tuple(slice(None, None, stride) for _ in range(grid.dim))] = coeff_values
    return np.fft.ifftn(np.fft.fftn(up) * np.fft.fftn(phi)).real


def grid_analysis(g, psi, J, grid):
    """Quadrature inner products h^d sum_i g_i psi(x_i - k 2^{-J}), all k."""
    g = np.asarray(g, dtype=float)
    if g.shape != grid.shape:
        raise ValueError("sample shape does not match grid")
    corr = np.fft.ifftn(np.fft.fftn(g) * np.conj(np.fft.fftn(psi))).real
    stride = grid.n // 2 ** J
    take = corr[tuple(slice(None, None, stride) for _ in range(grid.dim))]
    return grid.h ** grid.dim * take


@dataclass
class TrainingSet:
    """Paired observations Y_i = T f_i + noise and targets f_i on a grid."""

    Y: np.ndarray
    F: np.ndarray
    sigma: float
    grid: Grid
    op_desc: dict
    prior_desc: dict | None = None
    seed: int | None = None

    @property
    def n_samples(self):
        return self.Y.shape[0]


def make_training_set(op, prior, sigma, N, rng):
    """Draw N iid (Y_i, f_i) pairs from the prior and noise model."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    grid = op.grid
    F = np.empty((N,) + grid.shape)
    Y = np.empty_like(F)
    for i in range(N):
        F[i] = sample_prior(prior, grid, rng)
        Y[i] = add_white_noise(apply(op, F[i]), sigma, grid, rng)
    return TrainingSet(Y, F, float(sigma), grid, op.descriptor(), prior.descriptor())


def save_training_set(ts, path, binary=False):
    """Write a training set as JSON, optionally with a flat f64 sidecar.

    The sidecar holds Y then F, C-order, little-endian float64; the JSON
    document records shapes and the sidecar file name.
    """
    doc = {
        "format": "suniv-training-set-v1",
        "sigma": ts.sigma,
        "grid": {"dim": ts.grid.dim, "n": ts.grid.n},
        "n_samples": int(ts.n_samples),
        "op": ts.op_desc,
        "prior": ts.prior_desc,
        "seed": ts.seed,
    }
    if binary:
        sidecar = os.path.basename(str(path)) + ".bin"
        doc["sidecar"] = sidecar
        blob = np.concatenate([ts.Y.ravel(), ts.F.ravel()]).astype("<f8")
        with open(os.path.join(os.path.dirname(str(path)) or ".", sidecar), "wb") as fh:
            fh.write(blob.tobytes())
    else:
        doc["sidecar"] = None
        doc["Y"] = ts.Y.tolist()
        doc["F"] = ts.F.tolist()
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_training_set(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "suniv-training-set-v1":
        raise ValueError("not a suniv training set file")
    grid = Grid(doc["grid"]["dim"], doc["grid"]["n"])
    shape = (doc["n_samples"],) + grid.shape
    if doc["sidecar"] is not None:
        sidecar = os.path.join(os.path.dirname(str(path)) or ".", doc["sidecar"])
        blob = np.fromfile(sidecar, dtype="<f8")
        half = blob.size // 2
        Y = blob[:half].reshape(shape).astype(float)
        F = blob[half:].reshape(shape).astype(float)
    else:
        Y = np.asarray(doc["Y"], dtype=float)
        F = np.asarray(doc["F"], dtype=float)
    return TrainingSet(Y, F, float(doc["sigma"]), grid, doc["op"],
                       doc.get("prior"), doc.get("seed"))
