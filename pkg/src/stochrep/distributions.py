"""Compactly supported distributions and their pushforward along a flow.

A CompactDistribution is a finite sum of weighted point sources
w * d^alpha delta_x.  Atoms are user-placed sources; density terms are
tensor Gauss-Legendre discretisations of int g(x) d^alpha delta_x dx over a
box, so w_j = (quadrature weight) * g(x_j).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .adjoint import AdjointGalerkin
from .chainrule import chain_rule_coefficients
from .flow import BrownianDriver, FlowEnsemble, simulate_flow
from .hermite import BasisSpec, HermiteSeries
from .models import CoefficientModel


@dataclass
class SourceGroup:
    alpha: tuple[int, ...]
    points: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)


@dataclass
class CompactDistribution:
    d: int
    atoms: list = field(default_factory=list)  # (c, gamma, x)
    quad_terms: list = field(default_factory=list)  # SourceGroup
    support: tuple | None = None  # (lo, hi) arrays

    def __post_init__(self):
        self.atoms = [(float(c), tuple(int(g) for g in gam), np.asarray(x, dtype=float).reshape(self.d))
                      for c, gam, x in self.atoms]
        if self.support is None:
            pts = self.all_points()
            if len(pts):
                self.support = (pts.min(axis=0), pts.max(axis=0))
        for lo_hi in [self.support] if self.support is not None else []:
            lo, hi = (np.asarray(v, dtype=float) for v in lo_hi)
            pts = self.all_points()
            if len(pts) and (np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12)):
                raise ValueError("distribution has mass outside its declared support box")

    # -- construction -------------------------------------------------------

    @classmethod
    def delta(cls, x, gamma: Sequence[int] | None = None, weight: float = 1.0) -> "CompactDistribution":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        gamma = tuple(gamma) if gamma is not None else (0,) * x.size
        return cls(x.size, atoms=[(weight, gamma, x)])

    @classmethod
    def density(cls, g: Callable | str | np.ndarray, lo, hi, n: int = 32,
                alpha: Sequence[int] | None = None) -> "CompactDistribution":
        """int_box g(x) d^alpha delta_x dx on an n^d Gauss-Legendre grid."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        d = lo.size
        pts, wts = legendre_grid(lo, hi, n)
        if isinstance(g, str):
            g = named_density(g, lo, hi)
        vals = np.asarray(g(pts) if callable(g) else g, dtype=float).reshape(-1)
        if vals.shape[0] != len(pts):
            raise ValueError(f"density samples: expected {len(pts)}, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite density samples")
        alpha = tuple(alpha) if alpha is not None else (0,) * d
        return cls(d, quad_terms=[SourceGroup(alpha, pts, wts * vals)], support=(lo, hi))

    def __add__(self, other: "CompactDistribution") -> "CompactDistribution":
        if other.d != self.d:
            raise ValueError("dimension mismatch")
        sup = None
        if self.support is not None and other.support is not None:
            sup = (np.minimum(self.support[0], other.support[0]), np.maximum(self.support[1], other.support[1]))
        return CompactDistribution(self.d, self.atoms + other.atoms, self.quad_terms + other.quad_terms, sup)

    def __mul__(self, a: float) -> "CompactDistribution":
        return CompactDistribution(
            self.d, [(a * c, g, x) for c, g, x in self.atoms],
            [SourceGroup(q.alpha, q.points, a * q.weights) for q in self.quad_terms], self.support,
        )

    __rmul__ = __mul__

    # -- structure ------------------------------------------------------------

    @property
    def order(self) -> int:
        orders = [sum(g) for _, g, _ in self.atoms] + [sum(q.alpha) for q in self.quad_terms]
        return max(orders, default=0)

    def all_points(self) -> np.ndarray:
        pts = [x[None, :] for _, _, x in self.atoms] + [q.points for q in self.quad_terms]
        return np.concatenate(pts, axis=0) if pts else np.zeros((0, self.d))

    def groups(self) -> list[SourceGroup]:
        """Sources grouped by derivative index (atoms first, then densities)."""
        by_alpha: dict = {}
        for c, g, x in self.atoms:
            by_alpha.setdefault(g, ([], []))
            by_alpha[g][0].append(x)
            by_alpha[g][1].append(c)
        out = [SourceGroup(g, np.array(p).reshape(-1, self.d), np.array(w)) for g, (p, w) in by_alpha.items()]
        return out + list(self.quad_terms)

    def pair(self, phi_deriv: Callable) -> float:
        """<psi, phi> given phi_deriv(gamma, points) -> d^gamma phi(points)."""
        total = 0.0
        for grp in self.groups():
            sign = -1.0 if sum(grp.alpha) % 2 else 1.0
            total += sign * float(np.sum(grp.weights * phi_deriv(grp.alpha, grp.points)))
        return total

    def to_series(self, basis: BasisSpec) -> HermiteSeries:
        """Coefficients <psi, h_k> = sum w (-1)^|alpha| (d^alpha h_k)(x)."""
        c = np.zeros(basis.size)
        for grp in self.groups():
            sign = -1.0 if sum(grp.alpha) % 2 else 1.0
            c += sign * grp.weights @ basis.evaluate(grp.points, grp.alpha)
        return HermiteSeries(basis, c)


# --------------------------------------------------------------------------
# densities and cut-offs


def legendre_grid(lo, hi, n: int):
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    t, w = np.polynomial.legendre.leggauss(n)
    axes = [(0.5 * (h - l) * t + 0.5 * (h + l), 0.5 * (h - l) * w) for l, h in zip(lo, hi)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return pts, wts


def bump1d(u) -> np.ndarray:
    """exp(-1/(1-u^2)) on (-1, 1), zero outside."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    out = np.zeros_like(u)
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _bump_mass() -> float:
    return integrate.quad(lambda u: float(bump1d(np.array(u))), -1.0, 1.0, epsabs=1e-14, epsrel=1e-14)[0]


def named_density(name: str, lo, hi) -> Callable:
    """Probability densities on the box [lo, hi]: 'uniform' or 'bump'."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    if name == "uniform":
        vol = float(np.prod(hi - lo))
        return lambda x: np.where(np.all((x >= lo) & (x <= hi), axis=-1), 1.0 / vol, 0.0)
    if name == "bump":
        norm = float(np.prod(half * _bump_mass()))
        return lambda x: np.prod(bump1d((np.asarray(x) - mid) / half), axis=-1) / norm
    raise ValueError(f"unknown density {name!r}")


def smooth_step(u) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    f = lambda v: np.where(v > 0, np.exp(-1.0 / np.maximum(v, 1e-300)), 0.0)
    a, b = f(u), f(1.0 - u)
    return a / (a + b)


def cutoff(x, lo, hi, eps: float) -> np.ndarray:
    """Smooth function equal to 1 on [lo, hi] and 0 outside its eps-neighbourhood."""
    x = np.asarray(x, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    left = smooth_step((x - (lo - eps)) / eps)
    right = smooth_step(((hi + eps) - x) / eps)
    return np.prod(left * right, axis=-1)


# --------------------------------------------------------------------------
# pushforward Y_t(psi)


def _point_lookup(ens: FlowEnsemble, pts: np.ndarray) -> np.ndarray:
    starts = ens.starts if ens.starts.ndim == 2 else None
    if starts is None:
        raise ValueError("pushforward needs an ensemble with shared start points")
    idx = np.empty(len(pts), dtype=int)
    for i, p in enumerate(pts):
        hit = np.flatnonzero(np.all(np.abs(starts - p) <= 1e-12 * (1 + np.abs(p)), axis=1))
        if not len(hit):
            raise KeyError(f"no flow data for start point {p}")
        idx[i] = hit[0]
    return idx


def pushforward_coeffs(psi: CompactDistribution, ens: FlowEnsemble, record: int, basis: BasisSpec) -> np.ndarray:
    """Coefficients of Y_t(psi)(w) for every path of the ensemble, (M, N).

    For a source w d^alpha delta_x the image is
    w (-1)^|alpha| sum_gamma C_gamma(d^beta X(t,x)) (d^gamma h_k)(X(t,x)).
    """
    if psi.order > ens.order:
        raise ValueError(f"distribution of order {psi.order} needs flow derivatives of order >= {psi.order}")
    M = ens.X.shape[1]
    out = np.zeros((M, basis.size))
    data = ens.derivative_data(record)
    for grp in psi.groups():
        idx = _point_lookup(ens, grp.points)
        sel = {b: v[:, idx, :] for b, v in data.items() if sum(b) <= sum(grp.alpha)}
        Xs = sel[(0,) * psi.d]
        sign = -1.0 if sum(grp.alpha) % 2 else 1.0
        for gamma, C in chain_rule_coefficients(grp.alpha, sel).items():
            H = basis.evaluate(Xs, gamma)  # (M, n, N)
            out += sign * np.einsum("mn,n,mnk->mk", C, grp.weights, H)
    return out


def pushforward(psi: CompactDistribution, ens: FlowEnsemble, t: float, basis: BasisSpec, path: int = 0) -> HermiteSeries:
    """Y_t(psi) on a single path of the ensemble."""
    c = pushforward_coeffs(psi, ens, ens.index(t), basis)
    return HermiteSeries(basis, c[path])


def simulate_for(psi: CompactDistribution, model: CoefficientModel, driver: BrownianDriver, *,
                 n_paths: int | None = None, paths=None, record=None, inverse: bool = False) -> FlowEnsemble:
    """Flow ensemble started at every source point of psi, with enough derivatives."""
    return simulate_flow(model, psi.all_points(), driver, K=psi.order, n_paths=n_paths, paths=paths,
                         record=record, inverse=inverse)


# --------------------------------------------------------------------------
# pathwise SPDE residual


@dataclass
class SPDEResidual:
    times: np.ndarray
    residual: np.ndarray  # (M, n+1) in S_{-q}
    martingale: np.ndarray  # (M, N) stochastic-integral term at the final time
    drift_term: np.ndarray  # (M, N)
    q: float

    @property
    def max_residual(self) -> np.ndarray:
        return self.residual.max(axis=1)


def spde_residual(psi: CompactDistribution, model: CoefficientModel, driver: BrownianDriver, q: float,
                  galerkin: AdjointGalerkin, *, n_paths: int = 1, paths=None) -> SPDEResidual:
    """|| Y_tn - psi - sum_{m<n} A^*(Y_tm) dB_m - sum_{m<n} L^*(Y_tm) dt ||_{-q}.

    Left-point sums on the driver grid with the same increments as the flow.
    """
    basis = galerkin.basis
    ens = simulate_for(psi, model, driver, n_paths=n_paths, paths=paths)
    n = driver.n_steps
    M = len(ens.paths)
    Y = np.stack([pushforward_coeffs(psi, ens, i, basis) for i in range(n + 1)], axis=1)  # (M, n+1, N)
    dB = driver.increments(ens.paths)  # (M, n, r)
    AY = np.einsum("aij,mnj->mnai", galerkin.A, Y[:, :-1])  # (M, n, r, N)
    mart = np.einsum("mnai,mna->mni", AY, dB)
    drift = (Y[:, :-1] @ galerkin.L.T) * driver.step
    cum_m = np.concatenate([np.zeros((M, 1, basis.size)), np.cumsum(mart, axis=1)], axis=1)
    cum_d = np.concatenate([np.zeros((M, 1, basis.size)), np.cumsum(drift, axis=1)], axis=1)
    R = Y - Y[:, :1] - cum_m - cum_d
    w = basis.sobolev_weights(-q)
    res = np.sqrt(np.einsum("mnk,k->mn", R * R, w))
    return SPDEResidual(driver.times, res, cum_m[:, -1], cum_d[:, -1], q)
