"""Hermite-function calculus on truncated bases.

Coefficient vectors are stored densely in graded lexicographic order of the
multi-indices (total degree first, ties broken lexicographically).  Every
operator here is a compression onto degree <= n_max: coefficients pushed past
n_max are dropped.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

PI_M14 = np.pi ** -0.25
_RESCALE = 1e150


# --------------------------------------------------------------------------
# one-dimensional Hermite functions


def hermite_functions(n: int, x) -> np.ndarray:
    """Values h_0(x), ..., h_n(x), stacked along a new last axis.

    The recurrence runs on h_k(x) * exp(x^2/2) with a running log-scale, so
    large |x| with large n neither underflows at the start nor overflows
    later.
    """
    # every h_k underflows long before |x| = 1e6; clipping keeps x*x finite
    x = np.clip(np.asarray(x, dtype=float), -1e6, 1e6)
    out = np.empty(x.shape + (n + 1,))
    half_sq = 0.5 * x * x
    v_prev = np.zeros_like(x)
    v = np.full_like(x, PI_M14)
    logscale = np.zeros_like(x)
    out[..., 0] = np.exp(-half_sq) * PI_M14
    for k in range(n):
        v_next = np.sqrt(2.0 / (k + 1)) * x * v - np.sqrt(k / (k + 1.0)) * v_prev
        v_prev, v = v, v_next
        big = np.abs(v) > _RESCALE
        if big.any():
            v = np.where(big, v / _RESCALE, v)
            v_prev = np.where(big, v_prev / _RESCALE, v_prev)
            logscale = logscale + np.where(big, np.log(_RESCALE), 0.0)
        out[..., k + 1] = v * np.exp(logscale - half_sq)
    return out


def ladder_derivative(table: np.ndarray) -> np.ndarray:
    """Apply d/dx to a stack of h_0..h_m values; result covers degrees 0..m-1.

    Uses h_n' = sqrt(n/2) h_{n-1} - sqrt((n+1)/2) h_{n+1}.
    """
    m = table.shape[-1] - 1
    n = np.arange(m)
    out = -np.sqrt((n + 1) / 2.0) * table[..., 1 : m + 1]
    out[..., 1:] += np.sqrt(n[1:] / 2.0) * table[..., : m - 1]
    return out


def hermite_derivatives(n: int, x, order: int = 0) -> np.ndarray:
    """(d/dx)^order h_k(x) for k = 0..n, along the last axis."""
    table = hermite_functions(n + order, x)
    for _ in range(order):
        table = ladder_derivative(table)
    return table


# --------------------------------------------------------------------------
# bases and quadrature


def multi_indices(d: int, n_max: int) -> np.ndarray:
    """All k in N^d with |k| <= n_max, graded lexicographic order."""
    rows = []
    for deg in range(n_max + 1):
        level = [k for k in itertools.product(range(deg + 1), repeat=d) if sum(k) == deg]
        rows.extend(sorted(level))
    return np.array(rows, dtype=np.int64).reshape(-1, d)


@lru_cache(maxsize=64)
def _gauss_hermite_function_rule(q: int) -> tuple[np.ndarray, np.ndarray]:
    # weights for integrating f(t) dt directly: w_i exp(t_i^2) = 1 / sum_k h_k(t_i)^2
    nodes, _ = special.roots_hermite(q)
    h = hermite_functions(q - 1, nodes)
    weights = 1.0 / np.sum(h * h, axis=-1)
    return nodes, weights


@dataclass(frozen=True)
class BasisSpec:
    d: int
    n_max: int
    quad_nodes: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")

    @cached_property
    def indices(self) -> np.ndarray:
        return multi_indices(self.d, self.n_max)

    @cached_property
    def index_of(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(v) for v in k): i for i, k in enumerate(self.indices)}

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.indices.sum(axis=1)

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def n_quad(self) -> int:
        return max(self.quad_nodes, 2 * self.n_max + 1)

    def sobolev_weights(self, p: float) -> np.ndarray:
        """(2|k| + d)^(2p) for every basis element."""
        return (2.0 * self.degrees + self.d) ** (2.0 * p)

    def with_n_max(self, n_max: int) -> "BasisSpec":
        return BasisSpec(self.d, n_max, self.quad_nodes)

    def quadrature(self, n_quad: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Tensor Gauss-Hermite grid (Q^d, d) and weights for plain dx integrals."""
        q = n_quad or self.n_quad
        if self.d > 3:
            raise ValueError("tensor quadrature is limited to d <= 3")
        t, w = _gauss_hermite_function_rule(q)
        grids = np.meshgrid(*([t] * self.d), indexing="ij")
        wgrids = np.meshgrid(*([w] * self.d), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
        return pts, wts

    def evaluate(self, x, gamma: Sequence[int] | None = None) -> np.ndarray:
        """(d^gamma h_k)(x) for all basis k; x has shape (..., d)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValueError(f"expected points with last axis {self.d}, got {x.shape}")
        gamma = tuple(gamma) if gamma is not None else (0,) * self.d
        out = np.ones(x.shape[:-1] + (self.size,))
        for a in range(self.d):
            table = hermite_derivatives(self.n_max, x[..., a], gamma[a])
            out *= table[..., self.indices[:, a]]
        return out

    def index_map(self, other: "BasisSpec") -> np.ndarray:
        """Positions of this basis' elements inside ``other`` (must contain it)."""
        return np.array([other.index_of[tuple(int(v) for v in k)] for k in self.indices])


@dataclass
class HermiteSeries:
    basis: BasisSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.basis.size,):
            raise ValueError(
                f"coefficient vector has shape {self.coeffs.shape}, basis needs ({self.basis.size},)"
            )

    @classmethod
    def zeros(cls, basis: BasisSpec) -> "HermiteSeries":
        return cls(basis, np.zeros(basis.size))

    @classmethod
    def unit(cls, basis: BasisSpec, k: Sequence[int]) -> "HermiteSeries":
        c = np.zeros(basis.size)
        c[basis.index_of[tuple(k)]] = 1.0
        return cls(basis, c)

    def __getitem__(self, k) -> float:
        return float(self.coeffs[self.basis.index_of[tuple(k)]])

    def _check(self, other: "HermiteSeries"):
        if other.basis.d != self.basis.d or other.basis.n_max != self.basis.n_max:
            raise ValueError("basis mismatch")

    def __add__(self, other):
        self._check(other)
        return HermiteSeries(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return HermiteSeries(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, a: float):
        return HermiteSeries(self.basis, a * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):
        return HermiteSeries(self.basis, -self.coeffs)

    def restrict(self, basis: BasisSpec) -> "HermiteSeries":
        """Truncate to a smaller basis, or zero-pad into a larger one."""
        if basis.n_max <= self.basis.n_max:
            return HermiteSeries(basis, self.coeffs[basis.index_map(self.basis)])
        c = np.zeros(basis.size)
        c[self.basis.index_map(basis)] = self.coeffs
        return HermiteSeries(basis, c)

    def __call__(self, x) -> np.ndarray:
        return self.basis.evaluate(x) @ self.coeffs

    def norm(self, p: float) -> float:
        return sobolev_norm(self, p)

    def to_json(self) -> dict:
        return {
            "d": self.basis.d,
            "n_max": self.basis.n_max,
            "entries": [[k.tolist(), float(c)] for k, c in zip(self.basis.indices, self.coeffs)],
        }

    @classmethod
    def from_json(cls, data: dict | str) -> "HermiteSeries":
        if isinstance(data, str):
            data = json.loads(data)
        basis = BasisSpec(int(data["d"]), int(data["n_max"]))
        c = np.zeros(basis.size)
        for k, v in data["entries"]:
            c[basis.index_of[tuple(k)]] = v
        return cls(basis, c)


# --------------------------------------------------------------------------
# evaluation, transforms, inner products


def hermite_eval(k: Sequence[int], x, gamma: Sequence[int] | None = None) -> float:
    """(d^gamma h_k)(x) for a single multi-index."""
    k = tuple(k)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    gamma = tuple(gamma) if gamma is not None else (0,) * len(k)
    val = 1.0
    for a, (ka, ga) in enumerate(zip(k, gamma)):
        val *= hermite_derivatives(ka, x[a], ga)[ka]
    return float(val)


def transform(f: Callable | np.ndarray, basis: BasisSpec, n_quad: int | None = None) -> HermiteSeries:
    """Project onto the truncated basis by Gauss-Hermite quadrature.

    ``f`` is either a callable taking points of shape (n, d), or an array of
    samples on ``basis.quadrature(n_quad)``.
    """
    pts, wts = basis.quadrature(n_quad)
    vals = np.asarray(f(pts) if callable(f) else f, dtype=float).reshape(-1)
    if vals.shape[0] != pts.shape[0]:
        raise ValueError(f"expected {pts.shape[0]} samples, got {vals.shape[0]}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite samples in transform")
    q = int(round(pts.shape[0] ** (1.0 / basis.d)))
    tensor = (vals * wts).reshape((q,) * basis.d)
    table = hermite_functions(basis.n_max, _gauss_hermite_function_rule(q)[0])  # (q, n+1)
    for _ in range(basis.d):
        # contracting the leading axis appends k_a last, so after d passes
        # the axes read (k_1, ..., k_d)
        tensor = np.tensordot(tensor, table, axes=([0], [0]))
    coeffs = tensor[tuple(basis.indices.T)]
    return HermiteSeries(basis, coeffs)


def sobolev_inner(f: HermiteSeries, g: HermiteSeries, p: float) -> float:
    f._check(g)
    return float(np.sum(f.basis.sobolev_weights(p) * f.coeffs * g.coeffs))


def sobolev_norm(f: HermiteSeries, p: float) -> float:
    return float(np.sqrt(sobolev_inner(f, f, p)))


def delta_coeffs(x, gamma: Sequence[int] | None, basis: BasisSpec) -> HermiteSeries:
    """Coefficients of d^gamma delta_x: (-1)^|gamma| (d^gamma h_k)(x)."""
    x = np.asarray(x, dtype=float).reshape(basis.d)
    gamma = tuple(gamma) if gamma is not None else (0,) * basis.d
    sign = -1.0 if sum(gamma) % 2 else 1.0
    return HermiteSeries(basis, sign * basis.evaluate(x, gamma))


# --------------------------------------------------------------------------
# norms of point masses


def _shell_sums(x, n_max: int) -> np.ndarray:
    # S_n = sum_{|k|=n} h_k(x)^2, n = 0..n_max, as an iterated convolution
    x = np.atleast_1d(np.asarray(x, dtype=float))
    shells = None
    for xa in x:
        sq = hermite_functions(n_max, xa) ** 2
        shells = sq if shells is None else np.convolve(shells, sq)[: n_max + 1]
    return shells


def delta_norm_series(x, p: float, n_max: int) -> float:
    """Truncated series for the squared norm of delta_x in S_{-p}.

    sum_{n <= n_max} (2n+d)^(-2p) sum_{|k|=n} h_k(x)^2.  The dimension is
    taken from ``x``.  No convergence check: for p <= d/4 the partial sums
    grow without bound, which callers may probe deliberately.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    n = np.arange(n_max + 1)
    return float(np.sum((2.0 * n + d) ** (-2.0 * p) * _shell_sums(x, n_max)))


def mehler_kernel_diagonal(t, x) -> np.ndarray:
    """g(t,x) = sum_n exp(-(2n+d)t) sum_{|k|=n} h_k(x)^2 in closed form."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    r2 = float(x @ x)
    t = np.asarray(t, dtype=float)
    return (
        np.exp(-d * t)
        * np.pi ** (-d / 2.0)
        * (-np.expm1(-4.0 * t)) ** (-d / 2.0)
        * np.exp(-np.tanh(t) * r2)
    )


def delta_norm_mehler(x, p: float, *, atol: float = 1e-10, rtol: float = 1e-12, limit: int = 200) -> float:
    """Squared norm of delta_x in S_{-p} via the Mehler-kernel integral.

    (1/Gamma(2p)) int_0^inf t^(2p-1) g(t,x) dt.  On (0, 1] the t^(2p-1-d/2)
    singularity is handed to QUADPACK's algebraic-weight rule; on [1, inf)
    the substitution u = exp(-2t) maps the tail onto (0, e^-2].
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    if p <= d / 4.0:
        raise ValueError(f"the Mehler integral diverges for p <= d/4 = {d / 4}")
    r2 = float(x @ x)

    # near 0: t^(2p-1) g = t^(2p-1-d/2) * [ (t / (1-e^{-4t}))^(d/2) e^{-dt} pi^{-d/2} e^{-tanh(t) r2} ]
    def smooth_head(t):
        t = np.maximum(t, 1e-300)
        ratio = t / -np.expm1(-4.0 * t)
        return ratio ** (d / 2.0) * np.exp(-d * t) * np.pi ** (-d / 2.0) * np.exp(-np.tanh(t) * r2)

    head, _ = integrate.quad(
        smooth_head, 0.0, 1.0, weight="alg", wvar=(2.0 * p - 1.0 - d / 2.0, 0.0),
        epsabs=atol, epsrel=rtol, limit=limit,
    )

    # tail: t = -log(u)/2, dt = du / (2u)
    def tail_u(u):
        t = -0.5 * np.log(u)
        return t ** (2.0 * p - 1.0) * mehler_kernel_diagonal(t, x) / (2.0 * u)

    tail, _ = integrate.quad(tail_u, 0.0, np.exp(-2.0), epsabs=atol, epsrel=rtol, limit=limit)
    return float((head + tail) / special.gamma(2.0 * p))


# --------------------------------------------------------------------------
# operators as matrices between bases


def derivative_matrix(src: BasisSpec, dst: BasisSpec, axis: int) -> np.ndarray:
    """Matrix of d/dx_axis from span(src) to span(dst), compressed to dst."""
    return _ladder_matrix(src, dst, axis, sign=-1.0)


def coordinate_matrix(src: BasisSpec, dst: BasisSpec, axis: int) -> np.ndarray:
    """Matrix of multiplication by x_axis (exact ladder identity)."""
    return _ladder_matrix(src, dst, axis, sign=+1.0)


def _ladder_matrix(src: BasisSpec, dst: BasisSpec, axis: int, sign: float) -> np.ndarray:
    # h_n -> sqrt(n/2) h_{n-1} + sign * sqrt((n+1)/2) h_{n+1} along ``axis``
    out = np.zeros((dst.size, src.size))
    for j, k in enumerate(src.indices):
        n = int(k[axis])
        if n > 0:
            down = tuple(int(v) for v in k)
            down = down[:axis] + (n - 1,) + down[axis + 1 :]
            row = dst.index_of.get(down)
            if row is not None:
                out[row, j] += np.sqrt(n / 2.0)
        up = tuple(int(v) for v in k)
        up = up[:axis] + (n + 1,) + up[axis + 1 :]
        row = dst.index_of.get(up)
        if row is not None:
            out[row, j] += sign * np.sqrt((n + 1) / 2.0)
    return out


def function_matrix(sigma: Callable, src: BasisSpec, dst: BasisSpec, n_quad: int | None = None) -> np.ndarray:
    """Galerkin matrix M[k, j] = int sigma h_j h_k dx by tensor quadrature."""
    big = src if src.n_max >= dst.n_max else dst
    pts, wts = big.quadrature(n_quad)
    vals = np.asarray(sigma(pts), dtype=float).reshape(-1)
    if not np.all(np.isfinite(vals)):
        raise ValueError("multiplier is not finite at the quadrature nodes")
    phi_src = src.evaluate(pts)
    phi_dst = dst.evaluate(pts)
    return phi_dst.T @ ((wts * vals)[:, None] * phi_src)


def polynomial_matrix(terms: dict[tuple[int, ...], float], src: BasisSpec, dst: BasisSpec) -> np.ndarray:
    """Exact matrix of multiplication by sum_alpha c_alpha x^alpha via ladders."""
    out = np.zeros((dst.size, src.size))
    for alpha, c in terms.items():
        if c == 0.0:
            continue
        deg = int(sum(alpha))
        cur_basis = src
        cur = np.eye(src.size)
        for axis, power in enumerate(alpha):
            for _ in range(power):
                nxt = src.with_n_max(cur_basis.n_max + 1)
                cur = coordinate_matrix(cur_basis, nxt, axis) @ cur
                cur_basis = nxt
        assert cur_basis.n_max == src.n_max + deg
        if dst.n_max <= cur_basis.n_max:
            out += c * cur[dst.index_map(cur_basis)]
        else:
            pad = np.zeros((dst.size, src.size))
            pad[cur_basis.index_map(dst)] = cur
            out += c * pad
    return out


# --------------------------------------------------------------------------
# operators on series


def apply_derivative(f: HermiteSeries, axis: int = 0) -> HermiteSeries:
    return HermiteSeries(f.basis, derivative_matrix(f.basis, f.basis, axis) @ f.coeffs)


def multiply_by_coordinate(f: HermiteSeries, axis: int = 0) -> HermiteSeries:
    return HermiteSeries(f.basis, coordinate_matrix(f.basis, f.basis, axis) @ f.coeffs)


def multiply_by_function(f: HermiteSeries, sigma, n_quad: int | None = None) -> HermiteSeries:
    """Galerkin product sigma * f on the same basis.

    ``sigma`` may be a callable (quadrature route) or a dict of monomial
    exponents to coefficients (exact ladder route).
    """
    if isinstance(sigma, dict):
        m = polynomial_matrix(sigma, f.basis, f.basis)
    else:
        m = function_matrix(sigma, f.basis, f.basis, n_quad)
    return HermiteSeries(f.basis, m @ f.coeffs)


def translation_matrix(basis: BasisSpec, shift, n_quad: int | None = None) -> np.ndarray:
    """Matrix of f -> f(. - shift): reconstruct, shift, transform back."""
    shift = np.asarray(shift, dtype=float).reshape(basis.d)
    pts, wts = basis.quadrature(n_quad)
    shifted = basis.evaluate(pts - shift)  # h_j(y - shift)
    here = basis.evaluate(pts)
    return here.T @ (wts[:, None] * shifted)


def translate(f: HermiteSeries, shift, n_quad: int | None = None) -> HermiteSeries:
    shift = np.asarray(shift, dtype=float).reshape(f.basis.d)
    if not np.any(shift):
        return HermiteSeries(f.basis, f.coeffs.copy())
    return HermiteSeries(f.basis, translation_matrix(f.basis, shift, n_quad) @ f.coeffs)
