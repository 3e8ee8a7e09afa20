"""Adjoint operators A_i^* and L^* on truncated Hermite bases.

    A_i^* psi = - sum_k d_k (sigma^k_i psi)
    L^* psi   = 1/2 sum_{ij} d_ij ((sigma sigma^T)^i_j psi) - sum_i d_i (b^i psi)

Products are formed in a basis extended by the number of derivatives that
follow, so the rows kept after truncation are exact images (up to the
quadrature used for non-polynomial coefficients).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hermite import (
    BasisSpec, HermiteSeries, derivative_matrix, function_matrix,
    polynomial_matrix, sobolev_norm,
)
from .models import CoefficientModel


@dataclass(frozen=True)
class AdjointGalerkin:
    basis: BasisSpec
    A: np.ndarray  # (r, N, N)
    L: np.ndarray  # (N, N)

    def apply_L(self, psi: HermiteSeries) -> HermiteSeries:
        return HermiteSeries(self.basis, self.L @ psi.coeffs)

    def apply_A(self, psi: HermiteSeries, i: int) -> HermiteSeries:
        return HermiteSeries(self.basis, self.A[i] @ psi.coeffs)


def _mult(model: CoefficientModel, which, src: BasisSpec, dst: BasisSpec, n_quad=None) -> np.ndarray:
    # which: ("sigma", i, a) | ("diff", i, j) | ("drift", i)
    if model.is_polynomial:
        if which[0] == "sigma":
            poly = model.sigma_polys[which[1]][which[2]]
        elif which[0] == "diff":
            poly = model.diffusion_polys()[which[1]][which[2]]
        else:
            poly = model.drift_polys[which[1]]
        return polynomial_matrix(poly.terms, src, dst)
    if which[0] == "sigma":
        f = lambda x: model.sigma(x)[..., which[1], which[2]]
    elif which[0] == "diff":
        f = lambda x: model.diffusion(x)[..., which[1], which[2]]
    else:
        f = lambda x: model.drift(x)[..., which[1]]
    return function_matrix(f, src, dst, n_quad)


def assemble_adjoint(model: CoefficientModel, basis: BasisSpec, n_quad: int | None = None) -> AdjointGalerkin:
    d, r = model.d, model.r
    if basis.d != d:
        raise ValueError("basis and model dimensions differ")
    b1 = basis.with_n_max(basis.n_max + 1)
    b2 = basis.with_n_max(basis.n_max + 2)
    D10 = [derivative_matrix(b1, basis, k) for k in range(d)]
    D21 = [derivative_matrix(b2, b1, k) for k in range(d)]

    A = np.zeros((r, basis.size, basis.size))
    for a in range(r):
        for k in range(d):
            A[a] -= D10[k] @ _mult(model, ("sigma", k, a), basis, b1, n_quad)

    L = np.zeros((basis.size, basis.size))
    for i in range(d):
        for j in range(d):
            L += 0.5 * D10[i] @ D21[j] @ _mult(model, ("diff", i, j), basis, b2, n_quad)
        L -= D10[i] @ _mult(model, ("drift", i), basis, b1, n_quad)
    return AdjointGalerkin(basis, A, L)


def adjoint_apply(op: str, psi: HermiteSeries, model: CoefficientModel | None = None,
                  galerkin: AdjointGalerkin | None = None, i: int = 0) -> HermiteSeries:
    """Apply ``"L"`` (L^*) or ``"A"`` (A_i^*) to a truncated series."""
    if galerkin is None:
        galerkin = assemble_adjoint(model, psi.basis)
    if op == "L":
        return galerkin.apply_L(psi)
    if op == "A":
        return galerkin.apply_A(psi, i)
    raise ValueError(f"unknown operator {op!r}")


def hs_norm_A(psi: HermiteSeries, galerkin: AdjointGalerkin, q: float) -> float:
    """sum_i ||A_i^* psi||_{-q}^2."""
    return float(sum(sobolev_norm(galerkin.apply_A(psi, i), -q) ** 2 for i in range(galerkin.A.shape[0])))


def generator_galerkin(model: CoefficientModel, basis: BasisSpec, n_quad: int | None = None):
    """Galerkin matrices <h_k, A_i h_j> and <h_k, L h_j> by direct quadrature.

    Independent of the adjoint assembly: the generator is applied pointwise
    to the basis functions (derivatives from the ladder identity) and
    integrated on the tensor Gauss-Hermite grid.
    """
    d, r = model.d, model.r
    q = n_quad or max(basis.n_quad, basis.n_max + 8)
    pts, wts = basis.quadrature(q)
    phi = basis.evaluate(pts)

    def grad(gamma):
        return basis.evaluate(pts, gamma)

    units = [tuple(1 if a == k else 0 for a in range(d)) for k in range(d)]
    first = [grad(u) for u in units]
    sig = model.sigma(pts)
    diff = model.diffusion(pts)
    drift = model.drift(pts)

    GA = np.zeros((r, basis.size, basis.size))
    for a in range(r):
        img = sum(sig[:, k, a][:, None] * first[k] for k in range(d))
        GA[a] = phi.T @ (wts[:, None] * img)
    img = np.zeros_like(phi)
    for i in range(d):
        for j in range(d):
            gamma = tuple(int(units[i][a] + units[j][a]) for a in range(d))
            img += 0.5 * diff[:, i, j][:, None] * grad(gamma)
        img += drift[:, i][:, None] * first[i]
    GL = phi.T @ (wts[:, None] * img)
    return GA, GL
