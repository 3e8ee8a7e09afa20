"""Euler-Maruyama stochastic flows with derivative tensors and inverse Jacobian.

All start points of an ensemble share one Brownian path per path index.  The
spatial derivatives d^beta X are obtained by differentiating the Euler update
map exactly, so the discrete flow and its chain-rule identities hold to
rounding.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import rng
from .chainrule import chain_rule_coefficients, derivative_indices
from .models import CoefficientModel

log = logging.getLogger(__name__)

STEP_BLOCK = 64


@dataclass(frozen=True)
class BrownianDriver:
    """Uniform-grid Brownian increments drawn from keyed counters.

    Base increments live on the finest grid ``dt``; a driver with ``stride``
    s sums s consecutive base increments per step, and ``offset`` (in base
    steps) realises the time shift theta_s.
    """

    r: int
    seed: int
    dt: float
    n_steps: int
    stride: int = 1
    offset: int = 0

    @classmethod
    def on_interval(cls, r: int, seed: int, T: float, dt: float) -> "BrownianDriver":
        n = int(round(T / dt))
        if n <= 0 and T > 0:
            raise ValueError("time step larger than the horizon")
        if abs(n * dt - T) > 1e-9 * max(1.0, T):
            raise ValueError(f"T={T} is not a multiple of dt={dt}")
        return cls(r=r, seed=seed, dt=dt, n_steps=n)

    @property
    def step(self) -> float:
        return self.dt * self.stride

    @property
    def T(self) -> float:
        return self.n_steps * self.step

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.n_steps + 1)

    def step_index(self, t: float) -> int:
        k = int(round(t / self.step))
        if abs(k * self.step - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= k <= self.n_steps:
            raise ValueError(f"time {t} is not on the driver grid")
        return k

    def increments(self, paths, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Increments dB for steps [start, stop), shape (M, stop - start, r)."""
        stop = self.n_steps if stop is None else stop
        paths = np.asarray(paths)
        n = stop - start
        base = self.offset + (start + np.arange(n))[:, None] * self.stride + np.arange(self.stride)[None, :]
        z = rng.normals(self.seed, paths, base.ravel(), self.r)
        z = z.reshape(len(paths), n, self.stride, self.r).sum(axis=2)
        return np.sqrt(self.dt) * z

    def shift(self, s: float) -> "BrownianDriver":
        """Driver of the shifted path theta_s(omega)."""
        k = self.step_index(s)
        return replace(self, offset=self.offset + k * self.stride, n_steps=self.n_steps - k)

    def coarsen(self, factor: int) -> "BrownianDriver":
        if self.n_steps % factor:
            raise ValueError("step count not divisible by the coarsening factor")
        return replace(self, stride=self.stride * factor, n_steps=self.n_steps // factor)

    def until(self, T: float) -> "BrownianDriver":
        return replace(self, n_steps=self.step_index(T))


@dataclass
class FlowEnsemble:
    model: CoefficientModel
    driver: BrownianDriver
    starts: np.ndarray
    paths: np.ndarray
    steps: np.ndarray
    X: np.ndarray  # (R, M, P, d)
    derivs: dict = field(default_factory=dict)  # beta -> (R, M, P, d)
    J: np.ndarray | None = None  # (R, M, P, d, d)
    blown: np.ndarray | None = None  # (M,)
    order: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.driver.step

    def index(self, t: float) -> int:
        k = self.driver.step_index(t)
        hits = np.flatnonzero(self.steps == k)
        if not len(hits):
            raise KeyError(f"time {t} was not recorded")
        return int(hits[0])

    def jacobian(self, idx: int) -> np.ndarray:
        """dX^i/dx^j at record ``idx``, shape (M, P, d, d)."""
        d = self.model.d
        cols = [self.derivs[tuple(1 if a == j else 0 for a in range(d))][idx] for j in range(d)]
        return np.stack(cols, axis=-1)

    def derivative_data(self, idx: int) -> dict:
        """beta -> d^beta X at record ``idx``, including beta = 0."""
        out = {(0,) * self.model.d: self.X[idx]}
        out.update({b: v[idx] for b, v in self.derivs.items()})
        return out

    def inverse_deviation(self) -> np.ndarray:
        """max |J dX - I| per record over paths and points."""
        if self.J is None:
            raise ValueError("ensemble was simulated without the inverse Jacobian")
        eye = np.eye(self.model.d)
        dev = []
        for idx in range(len(self.steps)):
            prod = np.einsum("...ij,...jk->...ik", self.J[idx], self.jacobian(idx))
            dev.append(np.nanmax(np.abs(prod - eye)))
        return np.array(dev)


def _stiffness(model, X, dB, dt, betas):
    # d^gamma G(X) for the one-step map G(y) = sigma(y) dB + b(y) dt
    out = {}
    for g in betas:
        s = model.sigma_deriv(g, X)  # (M, P, d, r)
        out[g] = np.einsum("mpia,ma->mpi", s, dB) + model.drift_deriv(g, X) * dt
    return out


def _euler_step(model, X, derivs, J, dB, dt, betas, unit, inverse):
    d = model.d
    X_new = X + np.einsum("mpia,ma->mpi", model.sigma(X), dB) + model.drift(X) * dt
    if betas:
        dG = _stiffness(model, X, dB, dt, betas)
        data = {(0,) * d: X, **derivs}
        new = {}
        for b in betas:
            acc = derivs[b].copy()
            for g, c in chain_rule_coefficients(b, {k: v for k, v in data.items() if sum(k) <= sum(b)}).items():
                if sum(g) == 0:
                    continue
                acc += c[..., None] * dG[g]
            new[b] = acc
        derivs = new
    if inverse:
        S = np.stack([model.sigma_deriv(u, X) for u in unit], axis=-2)  # (M,P,i,j,alpha)
        noise = np.einsum("mpija,ma->mpij", S, dB)
        SS = np.einsum("mpija,mpjka->mpik", S, S)
        db = np.stack([model.drift_deriv(u, X) for u in unit], axis=-1)
        J = J - J @ noise - J @ (db - SS) * dt
    return X_new, derivs, J


def simulate_flow(
    model: CoefficientModel,
    starts,
    driver: BrownianDriver,
    K: int = 0,
    *,
    n_paths: int | None = None,
    paths=None,
    record: Sequence[int] | None = None,
    inverse: bool = False,
) -> FlowEnsemble:
    """Simulate X(t, x), d^beta X for 1 <= |beta| <= K, and optionally J = (dX)^-1.

    ``starts`` is (P, d) shared by all paths, or (M, P, d) per path.
    ``record`` lists the step indices to keep (default: every step).
    """
    if K > model.max_order:
        raise ValueError(f"derivative order {K} exceeds the model's oracle order {model.max_order}")
    if driver.r != model.r:
        raise ValueError("driver and model disagree on the noise dimension")
    d = model.d
    if paths is None:
        if n_paths is None:
            raise ValueError("give n_paths or paths")
        paths = np.arange(n_paths)
    paths = np.asarray(paths)
    M = len(paths)
    starts = np.asarray(starts, dtype=float)
    if starts.ndim == 1:
        starts = starts.reshape(1, d)
    X = np.broadcast_to(starts, (M,) + starts.shape[-2:]).copy() if starts.ndim == 2 else starts.copy()
    P = X.shape[1]
    record = np.arange(driver.n_steps + 1) if record is None else np.unique(np.asarray(record, dtype=int))
    if record.size and (record[0] < 0 or record[-1] > driver.n_steps):
        raise ValueError("record steps outside the driver grid")

    betas = derivative_indices(d, K) if K > 0 else []
    derivs = {b: np.zeros((M, P, d)) for b in betas}
    for j in range(d):
        if K > 0:
            derivs[tuple(1 if a == j else 0 for a in range(d))][..., j] = 1.0
    J = np.broadcast_to(np.eye(d), (M, P, d, d)).copy() if inverse else None
    blown = np.zeros(M, dtype=bool)

    rec_X = np.empty((len(record), M, P, d))
    rec_D = {b: np.empty((len(record), M, P, d)) for b in betas}
    rec_J = np.empty((len(record), M, P, d, d)) if inverse else None
    slot = {int(s): i for i, s in enumerate(record)}

    def store(step):
        i = slot.get(step)
        if i is None:
            return
        rec_X[i] = X
        for b in betas:
            rec_D[b][i] = derivs[b]
        if inverse:
            rec_J[i] = J

    store(0)
    dt = driver.step
    last = int(record[-1]) if record.size else 0
    unit = [tuple(1 if a == j else 0 for a in range(d)) for j in range(d)]
    for block in range(0, last, STEP_BLOCK):
        dB_block = driver.increments(paths, block, min(block + STEP_BLOCK, last))
        for n in range(dB_block.shape[1]):
            dB = dB_block[:, n, :]
            with np.errstate(over="ignore", invalid="ignore"):
                X, derivs, J = _euler_step(model, X, derivs, J, dB, dt, betas, unit, inverse)
            bad = ~np.isfinite(X).reshape(M, -1).all(axis=1)
            if bad.any():
                newly = bad & ~blown
                if newly.any():
                    log.warning("%d path(s) blew up at step %d", int(newly.sum()), block + n + 1)
                blown |= bad
                X[blown] = np.nan
            store(block + n + 1)

    return FlowEnsemble(
        model=model, driver=driver, starts=starts, paths=paths, steps=record,
        X=rec_X, derivs=rec_D, J=rec_J, blown=blown, order=K,
    )


# --------------------------------------------------------------------------
# checks on the flow


@dataclass
class CompositionReport:
    t: float
    s: float
    direct: np.ndarray
    composed: np.ndarray

    @property
    def discrepancy(self) -> float:
        return float(np.max(np.abs(self.direct - self.composed))) if self.direct.size else 0.0


def flow_composition_check(model, x, s: float, t: float, driver: BrownianDriver, n_paths: int = 8) -> CompositionReport:
    """Compare X(t+s, x, w) with X(s, X(t, x, w), theta_t w) on shared increments."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    total = driver.until(t + s)
    first = simulate_flow(model, x, total, n_paths=n_paths, record=[total.step_index(t), total.n_steps])
    mid = first.X[0]
    second_driver = total.shift(t)
    second = simulate_flow(model, mid, second_driver, paths=first.paths, record=[second_driver.n_steps])
    return CompositionReport(t=t, s=s, direct=first.X[-1], composed=second.X[-1])


@dataclass
class MomentEstimate:
    value: float
    se: float
    n_paths: int


def moment_probe(model, grid, alpha, q: float, t: float, driver: BrownianDriver, n_paths: int) -> MomentEstimate:
    """Monte Carlo estimate of E sup_{x in grid} |d^alpha X(t, x)|^q."""
    alpha = tuple(alpha)
    order = sum(alpha)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    k = driver.step_index(t)
    ens = simulate_flow(model, grid, driver.until(t), K=order, n_paths=n_paths, record=[k])
    val = ens.X[0] if order == 0 else ens.derivs[alpha][0]
    sup = np.max(np.linalg.norm(val, axis=-1) ** q, axis=1)
    sup = sup[~ens.blown]
    return MomentEstimate(float(sup.mean()), float(sup.std(ddof=1) / np.sqrt(len(sup))) if len(sup) > 1 else 0.0, len(sup))


def write_trajectories(ens: FlowEnsemble, path) -> None:
    """CSV rows: path, step, t, X..., dX (row-major), J (row-major)."""
    d = ens.model.d
    P = ens.X.shape[2]
    header = ["path", "point", "step", "t"] + [f"X{i}" for i in range(d)]
    if ens.order >= 1:
        header += [f"dX{i}{j}" for i in range(d) for j in range(d)]
    if ens.J is not None:
        header += [f"J{i}{j}" for i in range(d) for j in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for m, pth in enumerate(ens.paths):
            for pnt in range(P):
                for r, (step, t) in enumerate(zip(ens.steps, ens.times)):
                    row = [int(pth), pnt, int(step), repr(float(t))] + [repr(float(v)) for v in ens.X[r, m, pnt]]
                    if ens.order >= 1:
                        row += [repr(float(v)) for v in ens.jacobian(r)[m, pnt].ravel()]
                    if ens.J is not None:
                        row += [repr(float(v)) for v in ens.J[r, m, pnt].ravel()]
                    w.writerow(row)
