"""Forward-equation solvers: Monte Carlo over the adjoint flow and Galerkin RK4.

The Monte Carlo solution is psi_t = E Y_t(psi), averaged over path chunks of
fixed size so that the reduction order, and hence every bit of the result,
depends only on the seed and the configuration.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import floor

import numpy as np
from scipy.stats import gaussian_kde

from .adjoint import AdjointGalerkin, assemble_adjoint
from .distributions import CompactDistribution, cutoff, pushforward_coeffs, simulate_for
from .flow import BrownianDriver, simulate_flow
from .hermite import BasisSpec, HermiteSeries
from .models import CoefficientModel

log = logging.getLogger(__name__)

CHUNK = 8192
BLOWUP_LIMIT = 1e-3
STIFF_GROWTH = 1e6


class NumericalFailure(RuntimeError):
    """Blow-up or stiffness beyond the declared limits."""


def default_p(d: int, order: int, eps: float = 0.25) -> float:
    return d / 4 + order / 2 + eps


def default_q(p: float) -> float:
    return floor(p) + 3


class _Moments:
    """Chunked mean / variance accumulator (pairwise combination, fixed order)."""

    def __init__(self, shape):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def add(self, x: np.ndarray) -> None:
        nb = x.shape[0]
        if nb == 0:
            return
        mb = x.mean(axis=0)
        m2b = ((x - mb) ** 2).sum(axis=0)
        n = self.n + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * (nb / n)
        self.m2 = self.m2 + m2b + delta**2 * (self.n * nb / n)
        self.n = n

    @property
    def se(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


@dataclass
class SolveReport:
    basis: BasisSpec
    times: np.ndarray
    mean: np.ndarray  # (n_t, N)
    se: np.ndarray  # (n_t, N)
    n_paths: int
    dt: float
    p: float
    q: float
    seed: int
    second_moment: np.ndarray  # E ||Y_t||_{-p}^2, (n_t,)
    second_moment_se: np.ndarray
    blown: int
    truncation: np.ndarray  # relative -p norm change n_max vs n_max/2, (n_t,)

    def series(self, t: float | None = None) -> HermiteSeries:
        i = -1 if t is None else int(np.argmin(np.abs(self.times - t)))
        return HermiteSeries(self.basis, self.mean[i])

    def to_dict(self) -> dict:
        return {
            "d": self.basis.d, "n_max": self.basis.n_max, "times": self.times.tolist(),
            "indices": [list(map(int, k)) for k in self.basis.indices],
            "mean": self.mean.tolist(), "se": self.se.tolist(), "n_paths": self.n_paths,
            "dt": self.dt, "p": self.p, "q": self.q, "seed": self.seed,
            "second_moment": self.second_moment.tolist(), "second_moment_se": self.second_moment_se.tolist(),
            "blown": self.blown, "truncation_sensitivity": self.truncation.tolist(),
        }


def truncation_sensitivity(c: np.ndarray, basis: BasisSpec, p: float) -> float:
    """Relative change of ||c||_{-p} when the basis is halved."""
    w = basis.sobolev_weights(-p)
    full = np.sqrt(np.sum(w * c * c))
    half = basis.degrees <= basis.n_max // 2
    part = np.sqrt(np.sum((w * c * c)[half]))
    return float(abs(full - part) / full) if full > 0 else 0.0


def solve_forward_mc(psi: CompactDistribution, model: CoefficientModel, T: float | list, M: int, dt: float,
                     basis: BasisSpec, seed: int, p: float | None = None, q: float | None = None,
                     path_offset: int = 0) -> SolveReport:
    """psi_t = (1/M) sum_m Y_t(psi)(w_m) at the requested times."""
    times = np.atleast_1d(np.asarray(T, dtype=float))
    N_ord = psi.order
    p = default_p(psi.d, N_ord) if p is None else p
    q = default_q(p) if q is None else q
    if p <= psi.d / 4 + N_ord / 2:
        raise ValueError(f"p={p} must exceed d/4 + N/2 = {psi.d / 4 + N_ord / 2}")
    driver = BrownianDriver.on_interval(model.r, seed, float(times.max()), dt) if times.max() > 0 else \
        BrownianDriver(model.r, seed, dt, 0)
    steps = [driver.step_index(t) for t in times]
    w = basis.sobolev_weights(-p)
    coef = _Moments((len(times), basis.size))
    mom = _Moments((len(times),))
    blown = 0
    for start in range(0, M, CHUNK):
        paths = path_offset + np.arange(start, min(start + CHUNK, M))
        ens = simulate_for(psi, model, driver, paths=paths, record=steps)
        ok = ~ens.blown
        blown += int((~ok).sum())
        Y = np.stack([pushforward_coeffs(psi, ens, ens.index(t), basis)[ok] for t in times], axis=1)
        coef.add(Y)
        mom.add(np.einsum("mtk,k->mt", Y * Y, w))
    if blown > BLOWUP_LIMIT * M:
        raise NumericalFailure(f"{blown} of {M} paths blew up (limit {BLOWUP_LIMIT:.1%})")
    if blown:
        log.warning("%d blown-up paths dropped", blown)
    trunc = np.array([truncation_sensitivity(c, basis, p) for c in coef.mean])
    return SolveReport(basis, times, coef.mean, coef.se, coef.n, dt, p, q, seed,
                       mom.mean, mom.se, blown, trunc)


# --------------------------------------------------------------------------
# Galerkin integration of d/dt c = L* c


@dataclass
class GalerkinPath:
    basis: BasisSpec
    times: np.ndarray
    coeffs: np.ndarray  # (n_t, N)
    dt: float
    residual_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def at(self, t: float) -> HermiteSeries:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, t):
            raise KeyError(f"time {t} not on the integration grid")
        return HermiteSeries(self.basis, self.coeffs[i])

    def to_dict(self) -> dict:
        return {"d": self.basis.d, "n_max": self.basis.n_max, "dt": self.dt, "times": self.times.tolist(),
                "coeffs": self.coeffs.tolist(), "residual_times": self.residual_times.tolist(),
                "residuals": self.residuals.tolist()}


def stable_step(L: np.ndarray, safety: float = 2.5) -> float:
    """Largest RK4 step with dt * spectral radius <= safety."""
    rho = float(np.max(np.abs(np.linalg.eigvals(L)))) if L.size else 0.0
    return np.inf if rho == 0 else safety / rho


def solve_forward_galerkin(psi: CompactDistribution | HermiteSeries, model: CoefficientModel, T: float,
                           basis: BasisSpec, dt: float | None = None, galerkin: AdjointGalerkin | None = None,
                           checkpoints: int = 4, q: float = 3.0) -> GalerkinPath:
    """Classical RK4 for c' = L* c from the coefficients of psi.

    The step is shrunk to divide T; with ``dt=None`` it is chosen from the
    spectral radius of L*.  Residuals ||c(t) - c(0) - int L* c||_{-q} use the
    end-corrected trapezoid rule on the step grid.
    """
    G = galerkin or assemble_adjoint(model, basis)
    L = G.L
    c0 = psi.restrict(basis).coeffs if isinstance(psi, HermiteSeries) else psi.to_series(basis).coeffs
    if T == 0:
        return GalerkinPath(basis, np.zeros(1), c0[None].copy(), 0.0)
    h = stable_step(L) if dt is None else dt
    n = max(1, int(np.ceil(T / min(h, T) - 1e-9)))
    h = T / n
    out = np.empty((n + 1, basis.size))
    out[0] = c = c0.copy()
    for i in range(n):
        k1 = L @ c
        k2 = L @ (c + 0.5 * h * k1)
        k3 = L @ (c + 0.5 * h * k2)
        k4 = L @ (c + h * k3)
        new = c + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(new)):
            raise NumericalFailure(f"non-finite Galerkin state at step {i + 1}")
        size = np.linalg.norm(c)
        if size > 0 and np.linalg.norm(new) > STIFF_GROWTH * size:
            raise NumericalFailure(f"step growth above {STIFF_GROWTH:g} at step {i + 1}: stiff system, reduce dt")
        out[i + 1] = c = new
    times = h * np.arange(n + 1)
    Lc = out @ L.T
    LLc = Lc @ L.T
    # end-corrected trapezoid, exact for cubics like the RK4 stages
    step = 0.5 * h * (Lc[1:] + Lc[:-1]) + h * h / 12 * (LLc[:-1] - LLc[1:])
    integral = np.concatenate([np.zeros((1, basis.size)), np.cumsum(step, axis=0)])
    w = basis.sobolev_weights(-q)
    res_all = np.sqrt(np.sum(w * (out - out[0] - integral) ** 2, axis=1))
    marks = np.unique(np.linspace(0, n, checkpoints + 1).round().astype(int))
    return GalerkinPath(basis, times, out, h, times[marks], res_all[marks])


# --------------------------------------------------------------------------
# transition kernel


@dataclass
class KernelEstimate:
    x: np.ndarray
    t: float
    series: HermiteSeries
    se: np.ndarray
    mass: float
    mass_se: float
    n_paths: int
    kde_points: np.ndarray | None = None
    kde: np.ndarray | None = None
    kde_se: np.ndarray | None = None
    samples: np.ndarray | None = None  # per-path coefficients, if kept

    @property
    def mass_ok(self) -> bool:
        return abs(self.mass - 1.0) <= 4 * self.mass_se + 1e-6

    def to_dict(self) -> dict:
        out = {"x": self.x.tolist(), "t": self.t, "n_paths": self.n_paths, "coeffs": self.series.coeffs.tolist(),
               "se": self.se.tolist(), "mass": self.mass, "mass_se": self.mass_se}
        if self.kde is not None:
            out.update(kde_points=self.kde_points.tolist(), kde=self.kde.tolist(), kde_se=self.kde_se.tolist())
        return out


def kde_values(samples: np.ndarray, points: np.ndarray):
    """Gaussian KDE with Silverman bandwidth, with the MC standard error of each value."""
    samples = np.asarray(samples, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = samples.shape[1]
    kde = gaussian_kde(samples.T, bw_method="silverman")
    cov = np.atleast_2d(kde.covariance)
    inv = np.linalg.inv(cov)
    norm = 1.0 / np.sqrt((2 * np.pi) ** d * np.linalg.det(cov))
    vals, ses = [], []
    for y in points:
        diff = samples - y
        k = norm * np.exp(-0.5 * np.einsum("mi,ij,mj->m", diff, inv, diff))
        vals.append(k.mean())
        ses.append(k.std(ddof=1) / np.sqrt(len(k)))
    return np.array(vals), np.array(ses)


def terminal_states(model: CoefficientModel, x, t: float, M: int, dt: float, seed: int, path_offset: int = 0):
    """X(t, x) on paths path_offset .. path_offset+M-1, shape (M, d); blown paths removed."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, model.d)
    driver = BrownianDriver.on_interval(model.r, seed, t, dt)
    out = []
    for start in range(0, M, CHUNK):
        paths = path_offset + np.arange(start, min(start + CHUNK, M))
        ens = simulate_flow(model, x, driver, paths=paths, record=[driver.n_steps])
        out.append(ens.X[0][~ens.blown, 0])
    X = np.concatenate(out, axis=0)
    if M - len(X) > BLOWUP_LIMIT * M:
        raise NumericalFailure(f"{M - len(X)} of {M} kernel paths blew up")
    return X


def estimate_kernel(model: CoefficientModel, x, t: float, M: int, basis: BasisSpec, dt: float, seed: int,
                    path_offset: int = 0, kde_points=None, window: float | None = None,
                    keep_samples: bool = False) -> KernelEstimate:
    """Series of P(t, x, .) = E delta_{X(t,x)}, with a mass check and optional KDE."""
    if t <= 0:
        raise ValueError("kernel estimation needs t > 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    X = terminal_states(model, x, t, M, dt, seed, path_offset)
    coef = _Moments((basis.size,))
    keep = []
    for s in range(0, len(X), CHUNK):
        H = basis.evaluate(X[s:s + CHUNK])
        coef.add(H)
        if keep_samples:
            keep.append(H)
    if window is None:
        spread = np.sqrt(t * np.max(np.abs(model.diffusion(x[None])))) + 1e-12
        window = 8 * spread + np.max(np.abs(model.drift(x[None]))) * t + 1.0
    chi = cutoff(X, x - window, x + window, 1.0)
    mass, mass_se = float(chi.mean()), float(chi.std(ddof=1) / np.sqrt(len(chi)))
    est = KernelEstimate(x, t, HermiteSeries(basis, coef.mean), coef.se, mass, mass_se, coef.n,
                         samples=np.concatenate(keep) if keep_samples else None)
    if kde_points is not None:
        pts = np.asarray(kde_points, dtype=float).reshape(-1, model.d)
        est.kde_points = pts
        est.kde, est.kde_se = kde_values(X, pts)
    return est
