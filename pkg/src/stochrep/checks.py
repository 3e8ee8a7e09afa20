"""Numerical checkers for the forward-equation theory.

Each checker returns a dataclass report with a ``passed`` flag and a
``to_dict`` for serialization.  Monte Carlo comparisons use bands of a fixed
number of standard errors; estimates that must be independent draw from
disjoint path ranges of the same keyed stream.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from math import floor

import numpy as np
from scipy.linalg import eigh

from .adjoint import assemble_adjoint
from .distributions import CompactDistribution, pushforward_coeffs, simulate_for, spde_residual
from .flow import BrownianDriver
from .hermite import BasisSpec, transform, translation_matrix
from .models import CoefficientModel
from .solver import (
    default_p, estimate_kernel, solve_forward_galerkin, solve_forward_mc, truncation_sensitivity,
)

# path-range stride separating independent estimates
BLOCK = 10_000_000


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


class _Report:
    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


# --------------------------------------------------------------------------
# monotonicity inequality


@dataclass
class MonotonicityReport(_Report):
    q: float
    n_max: int
    c_star: float
    c_star_refined: float
    drift: float
    history: list = field(default_factory=list)  # (n_max, C*)

    @property
    def growth(self) -> bool:
        """A positive constant lets the Gronwall bound grow in time."""
        return self.c_star_refined > 0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.c_star) and np.isfinite(self.c_star_refined))


def monotonicity_constant(model: CoefficientModel, q: float, basis: BasisSpec) -> float:
    """max over truncated phi of [2<phi, L*phi>_{-q} + sum_i ||A_i* phi||_{-q}^2] / ||phi||_{-q}^2."""
    G = assemble_adjoint(model, basis)
    w = basis.sobolev_weights(-q)
    H = G.L.T * w + (w[:, None] * G.L)
    for A in G.A:
        H = H + A.T @ (w[:, None] * A)
    H = 0.5 * (H + H.T)
    vals = eigh(H, np.diag(w), eigvals_only=True)
    return float(vals[-1])


def check_monotonicity(model: CoefficientModel, q: float, basis: BasisSpec) -> MonotonicityReport:
    c1 = monotonicity_constant(model, q, basis)
    fine = basis.with_n_max(2 * basis.n_max)
    c2 = monotonicity_constant(model, q, fine)
    drift = abs(c2 - c1) / abs(c2) if c2 != 0 else abs(c2 - c1)
    return MonotonicityReport(q, basis.n_max, c1, c2, drift, [(basis.n_max, c1), (fine.n_max, c2)])


@dataclass
class UniquenessReport(_Report):
    q: float
    c_star: float
    steps: list
    step_gaps: list  # ||c_h - c_{h/2}||_{-q} along the ladder
    times: list
    gap: list  # ||phi_t - phi'_t||_{-q}
    envelope: list  # exp(C* t / 2) ||phi_0 - phi'_0||_{-q}

    @property
    def refinement_contracts(self) -> bool:
        return all(b < a for a, b in zip(self.step_gaps, self.step_gaps[1:]))

    @property
    def gronwall_holds(self) -> bool:
        return all(g <= e * (1 + 1e-9) + 1e-14 for g, e in zip(self.gap, self.envelope))

    @property
    def passed(self) -> bool:
        return self.refinement_contracts and self.gronwall_holds


def uniqueness_check(model: CoefficientModel, psi: CompactDistribution, other: CompactDistribution, T: float,
                     basis: BasisSpec, q: float, dt: float, levels: int = 3) -> UniquenessReport:
    """Discrete consequences of the monotonicity inequality for two Galerkin solutions.

    Runs from ``psi`` at steps dt, dt/2, ... converge to each other, and the
    solutions from ``psi`` and ``other`` stay inside the Gronwall envelope.
    """
    G = assemble_adjoint(model, basis)
    c_star = monotonicity_constant(model, q, basis)
    w = basis.sobolev_weights(-q)
    norm = lambda v: float(np.sqrt(np.sum(w * v * v)))
    ends = [solve_forward_galerkin(psi, model, T, basis, dt / 2**i, galerkin=G).coeffs[-1] for i in range(levels)]
    gaps = [norm(a - b) for a, b in zip(ends, ends[1:])]
    one = solve_forward_galerkin(psi, model, T, basis, dt, galerkin=G)
    two = solve_forward_galerkin(other, model, T, basis, dt, galerkin=G)
    diff = [norm(a - b) for a, b in zip(one.coeffs, two.coeffs)]
    env = [np.exp(max(c_star, 0.0) * t / 2) * diff[0] for t in one.times]
    return UniquenessReport(q, c_star, [dt / 2**i for i in range(levels)], gaps, one.times.tolist(), diff, env)


# --------------------------------------------------------------------------
# martingale term


@dataclass
class MartingaleReport(_Report):
    T: float
    n_paths: int
    mean: np.ndarray
    se: np.ndarray
    max_z: float

    @property
    def passed(self) -> bool:
        return self.max_z <= 4.0


def martingale_check(psi: CompactDistribution, model: CoefficientModel, T: float, dt: float, basis: BasisSpec,
                     n_paths: int, seed: int, q: float | None = None) -> MartingaleReport:
    """Mean over paths of sum_m A*(Y_tm) dB_m at T, which should vanish."""
    driver = BrownianDriver.on_interval(model.r, seed, T, dt)
    G = assemble_adjoint(model, basis)
    q = 3.0 if q is None else q
    chunks = []
    for start in range(0, n_paths, 1024):
        paths = np.arange(start, min(start + 1024, n_paths))
        chunks.append(spde_residual(psi, model, driver, q, G, paths=paths).martingale)
    mart = np.concatenate(chunks)
    mean = mart.mean(axis=0)
    se = mart.std(axis=0, ddof=1) / np.sqrt(len(mart))
    z = np.abs(mean) / np.where(se > 0, se, np.inf)
    return MartingaleReport(T, len(mart), mean, se, float(z.max()))


# --------------------------------------------------------------------------
# kernel superposition


@dataclass
class SuperpositionReport(_Report):
    t: float
    nodes: int
    superposed: np.ndarray
    direct: np.ndarray
    joint_se: np.ndarray
    max_z: float

    @property
    def passed(self) -> bool:
        return self.max_z <= 4.0


def superposition_check(psi: CompactDistribution, model: CoefficientModel, t: float, M: int, dt: float,
                        basis: BasisSpec, seed: int) -> SuperpositionReport:
    """int psi(x) P(t, x, .) dx from per-node kernels against the direct Monte Carlo solve."""
    if psi.atoms or any(sum(g.alpha) for g in psi.quad_terms):
        raise ValueError("superposition needs a pure density distribution")
    pts = np.concatenate([g.points for g in psi.quad_terms])
    wts = np.concatenate([g.weights for g in psi.quad_terms])
    sup = np.zeros(basis.size)
    var = np.zeros(basis.size)
    for j, (x, w) in enumerate(zip(pts, wts)):
        k = estimate_kernel(model, x, t, M, basis, dt, seed, path_offset=(j + 1) * BLOCK)
        sup += w * k.series.coeffs
        var += (w * k.se) ** 2
    direct = solve_forward_mc(psi, model, t, M, dt, basis, seed)
    joint = np.sqrt(var + direct.se[0] ** 2)
    z = np.abs(sup - direct.mean[0]) / np.where(joint > 0, joint, np.inf)
    return SuperpositionReport(t, len(pts), sup, direct.mean[0], joint, float(z.max()))


# --------------------------------------------------------------------------
# symmetry of the transition density


@dataclass
class SymmetryReport(_Report):
    t: float
    grid: list
    forward: np.ndarray  # p(t, x_i, y_j)
    backward: np.ndarray  # p(t, y_j, x_i)
    band: np.ndarray
    max_excess: float  # max |diff| / band
    declared_self_adjoint: bool

    @property
    def passed(self) -> bool:
        return self.max_excess <= 1.0


def check_symmetry(model: CoefficientModel, t: float, grid, M: int, dt: float, seed: int,
                   n_sigma: float = 4.0) -> SymmetryReport:
    """Compare kernel-density estimates of p(t, x, y) and p(t, y, x) on a grid.

    One independent path block per start point; the diagonal compares an
    estimate with itself.
    """
    grid = np.asarray(grid, dtype=float).reshape(-1, model.d)
    n = len(grid)
    val = np.zeros((n, n))
    se = np.zeros((n, n))
    for i, x in enumerate(grid):
        k = estimate_kernel(model, x, t, M, BasisSpec(model.d, 0), dt, seed, path_offset=i * BLOCK, kde_points=grid)
        val[i], se[i] = k.kde, k.kde_se
    band = n_sigma * np.sqrt(se**2 + se.T**2)
    diff = np.abs(val - val.T)
    excess = np.where(band > 0, diff / np.where(band > 0, band, 1.0), np.where(diff > 0, np.inf, 0.0))
    return SymmetryReport(t, grid.tolist(), val, val.T.copy(), band, float(excess.max()), model.self_adjoint)


# --------------------------------------------------------------------------
# translation invariance for constant coefficients


@dataclass
class TranslationReport(_Report):
    t: float
    p: float
    shifts: list
    discrepancy: list
    band: list
    pathwise_error: float
    pathwise_tol: float

    @property
    def passed(self) -> bool:
        ok = all(d <= b for d, b in zip(self.discrepancy, self.band))
        return ok and self.pathwise_error <= self.pathwise_tol


def check_translation(model: CoefficientModel, t: float, shifts, M: int, dt: float, basis: BasisSpec, seed: int,
                      p: float | None = None, allowance: float = 1e-3, n_paths_pathwise: int = 8,
                      pathwise_tol: float = 1e-8) -> TranslationReport:
    """P(t, x, .) against tau_x P(t, 0, .) in the -p norm, plus the pathwise reduction Y_t = tau_{X_t - x}."""
    if not model.is_constant:
        raise ValueError("translation invariance needs constant coefficients")
    d = model.d
    p = default_p(d, 0) if p is None else p
    w = basis.sobolev_weights(-p)
    origin = np.zeros(d)
    k0 = estimate_kernel(model, origin, t, M, basis, dt, seed, path_offset=0, keep_samples=True)
    disc, band = [], []
    for j, x in enumerate(np.asarray(shifts, dtype=float).reshape(-1, d)):
        if not np.any(x):
            disc.append(0.0)
            band.append(allowance)
            continue
        kx = estimate_kernel(model, x, t, M, basis, dt, seed, path_offset=(j + 1) * BLOCK)
        Tm = translation_matrix(basis, x)
        moved = k0.samples @ Tm.T
        se0 = moved.std(axis=0, ddof=1) / np.sqrt(len(moved))
        diff = kx.series.coeffs - moved.mean(axis=0)
        disc.append(float(np.sqrt(np.sum(w * diff**2))))
        band.append(float(4 * np.sqrt(np.sum(w * (kx.se**2 + se0**2))) + allowance))

    # pathwise: a density moved by the flow is the translate by the path shift
    psi = CompactDistribution.density("bump", -0.5 * np.ones(d), 0.5 * np.ones(d), 16)
    driver = BrownianDriver.on_interval(model.r, seed, t, dt)
    ens = simulate_for(psi, model, driver, paths=np.arange(n_paths_pathwise) + 7 * BLOCK, record=[driver.n_steps])
    big = basis.with_n_max(max(2 * basis.n_max, 64))
    phi = transform(lambda y: (1 + y.sum(-1) - 0.3 * (y**2).sum(-1)) * np.exp(-0.5 * (y**2).sum(-1)), big).coeffs
    Y = pushforward_coeffs(psi, ens, 0, big)
    err = 0.0
    for m in range(len(ens.paths)):
        shift = ens.X[0, m, 0] - ens.starts[0]
        ref = psi.pair(lambda g, x: _phi_shift_deriv(g, x + shift))
        err = max(err, abs(float(Y[m] @ phi) - ref))
    return TranslationReport(t, p, np.asarray(shifts, dtype=float).tolist(), disc, band, err, pathwise_tol)


def _phi_shift_deriv(gamma, y):
    # derivatives of (1 + sum y - 0.3|y|^2) exp(-|y|^2/2), orders 0 only (density probes)
    if any(gamma):
        raise ValueError("pathwise translation probe supports densities only")
    return (1 + y.sum(-1) - 0.3 * (y**2).sum(-1)) * np.exp(-0.5 * (y**2).sum(-1))


# --------------------------------------------------------------------------
# semigroup operator bound


def semigroup_q(d: int, p: float, eps: float = 0.25) -> float:
    return 1.25 * d + floor(p) + 1 + eps


@dataclass
class SemigroupReport(_Report):
    p: float
    q: float
    times: list
    ratios: np.ndarray  # (n_probes, n_t)
    ratio_se: np.ndarray
    running_sup: np.ndarray  # (n_t,)
    running_sup_se: np.ndarray
    first_quarter: float
    last_quarter: float
    trend_se: float
    truncation: float

    @property
    def sup(self) -> float:
        return float(self.running_sup[-1])

    @property
    def doubling_change(self) -> float:
        """Relative change of the running sup between T/2 and T."""
        t = np.asarray(self.times)
        half = float(self.running_sup[np.flatnonzero(t <= t[-1] / 2 + 1e-12)[-1]])
        return abs(self.sup - half) / half if half > 0 else float("inf")

    @property
    def passed(self) -> bool:
        return bool(np.all(np.isfinite(self.ratios))) and self.last_quarter <= self.first_quarter + 2 * self.trend_se


def semigroup_bound(model: CoefficientModel, probes: list, times, M: int, dt: float, basis: BasisSpec, seed: int,
                    p: float | None = None, q: float | None = None) -> SemigroupReport:
    """Monte Carlo ratios ||S_t psi||_{-q} / ||psi||_{-p} over probes and a time grid."""
    times = np.asarray(times, dtype=float)
    d = model.d
    p = max(default_p(d, pr.order) for pr in probes) if p is None else p
    q = semigroup_q(d, p) if q is None else q
    wq = basis.sobolev_weights(-q)
    ratios = np.zeros((len(probes), len(times)))
    ses = np.zeros_like(ratios)
    trunc = 0.0
    driver = BrownianDriver.on_interval(model.r, seed, float(times.max()), dt)
    steps = [driver.step_index(t) for t in times]
    for i, psi in enumerate(probes):
        base = psi.to_series(basis).norm(-p)
        ens = simulate_for(psi, model, driver, paths=np.arange(M) + i * BLOCK, record=steps)
        ok = ~ens.blown
        for j, t in enumerate(times):
            Y = pushforward_coeffs(psi, ens, ens.index(t), basis)[ok]
            m = Y.mean(axis=0)
            nrm = float(np.sqrt(np.sum(wq * m * m)))
            g = wq * m / nrm if nrm > 0 else np.zeros_like(m)
            s = Y @ g
            ratios[i, j] = nrm / base
            ses[i, j] = (s.std(ddof=1) / np.sqrt(len(s)) / base) if t > 0 else 0.0
            trunc = max(trunc, truncation_sensitivity(m, basis, q))
    best = ratios.argmax(axis=0)
    R = ratios[best, np.arange(len(times))]
    Rse = ses[best, np.arange(len(times))]
    sup = np.maximum.accumulate(R)
    at = np.array([int(np.argmax(R[: j + 1])) for j in range(len(times))])
    sup_se = Rse[at]
    n4 = max(1, len(times) // 4)
    first, last = float(sup[:n4].mean()), float(sup[-n4:].mean())
    tse = float(np.sqrt(sup_se[:n4].mean() ** 2 + sup_se[-n4:].mean() ** 2))
    return SemigroupReport(p, q, times.tolist(), ratios, ses, sup, sup_se, first, last, tse, trunc)
