"""SDE coefficient models dX = sigma(X) dB + b(X) dt with derivative oracles."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Callable, Sequence

import numpy as np

Exponent = tuple[int, ...]


@dataclass(frozen=True)
class Poly:
    """Multivariate polynomial sum_alpha c_alpha x^alpha in d variables."""

    d: int
    terms: dict[Exponent, float] = field(default_factory=dict)

    @classmethod
    def const(cls, d: int, c: float) -> "Poly":
        return cls(d, {(0,) * d: float(c)} if c else {})

    @classmethod
    def coord(cls, d: int, axis: int, c: float = 1.0) -> "Poly":
        e = [0] * d
        e[axis] = 1
        return cls(d, {tuple(e): float(c)})

    @classmethod
    def from_list(cls, d: int, spec: Sequence) -> "Poly":
        """From [[coef, [e_1..e_d]], ...]; a bare number is a constant."""
        if isinstance(spec, (int, float)):
            return cls.const(d, spec)
        terms: dict[Exponent, float] = {}
        for coef, expo in spec:
            expo = tuple(int(e) for e in expo)
            if len(expo) != d or any(e < 0 for e in expo):
                raise ValueError(f"bad exponent {expo} for d={d}")
            terms[expo] = terms.get(expo, 0.0) + float(coef)
        return cls(d, {k: v for k, v in terms.items() if v != 0.0})

    def to_list(self) -> list:
        return [[c, list(e)] for e, c in sorted(self.terms.items())]

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __add__(self, other: "Poly") -> "Poly":
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Poly(self.d, {k: v for k, v in terms.items() if v != 0.0})

    def __mul__(self, other) -> "Poly":
        if isinstance(other, (int, float)):
            return Poly(self.d, {e: c * other for e, c in self.terms.items() if c * other != 0.0})
        terms: dict[Exponent, float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0.0) + c1 * c2
        return Poly(self.d, {k: v for k, v in terms.items() if v != 0.0})

    __rmul__ = __mul__

    def deriv(self, beta: Sequence[int]) -> "Poly":
        terms: dict[Exponent, float] = {}
        for e, c in self.terms.items():
            if any(ei < bi for ei, bi in zip(e, beta)):
                continue
            factor = prod(prod(range(ei - bi + 1, ei + 1)) for ei, bi in zip(e, beta))
            ne = tuple(ei - bi for ei, bi in zip(e, beta))
            terms[ne] = terms.get(ne, 0.0) + c * factor
        return Poly(self.d, {k: v for k, v in terms.items() if v != 0.0})

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for e, c in self.terms.items():
            term = np.full(x.shape[:-1], c)
            for a, ea in enumerate(e):
                if ea:
                    term = term * x[..., a] ** ea
            out = out + term
        return out


@dataclass(frozen=True)
class CoefficientModel:
    """SDE data with derivative oracles.

    ``sigma_deriv(beta, x)`` returns d^beta sigma at points x of shape
    (..., d) as an array (..., d, r); ``drift_deriv(beta, x)`` returns
    (..., d).  Polynomial models carry their ``Poly`` entries as well, which
    lets the operator assembly use exact ladder products.
    """

    d: int
    r: int
    sigma_deriv: Callable = field(repr=False)
    drift_deriv: Callable = field(repr=False)
    max_order: int = 8
    is_constant: bool = False
    is_linear: bool = False
    self_adjoint: bool = False
    name: str = "model"
    sigma_polys: tuple | None = field(default=None, repr=False)
    drift_polys: tuple | None = field(default=None, repr=False)

    def sigma(self, x) -> np.ndarray:
        return self.sigma_deriv((0,) * self.d, x)

    def drift(self, x) -> np.ndarray:
        return self.drift_deriv((0,) * self.d, x)

    @property
    def is_polynomial(self) -> bool:
        return self.sigma_polys is not None

    def diffusion_polys(self) -> list[list[Poly]]:
        """(sigma sigma^T)^i_j as polynomials."""
        s = self.sigma_polys
        out = []
        for i in range(self.d):
            row = []
            for j in range(self.d):
                acc = Poly(self.d)
                for a in range(self.r):
                    acc = acc + s[i][a] * s[j][a]
                row.append(acc)
            out.append(row)
        return out

    def diffusion(self, x) -> np.ndarray:
        s = self.sigma(x)
        return np.einsum("...ia,...ja->...ij", s, s)

    def check_growth(self, points, K: float) -> bool:
        """Spot check ||sigma(x)|| + ||b(x)|| <= K (1 + |x|) on sample points."""
        points = np.asarray(points, dtype=float)
        lhs = np.linalg.norm(self.sigma(points).reshape(len(points), -1), axis=-1)
        lhs = lhs + np.linalg.norm(self.drift(points), axis=-1)
        return bool(np.all(lhs <= K * (1.0 + np.linalg.norm(points, axis=-1))))

    def spec(self) -> dict:
        """Serializable description (polynomial models only)."""
        if not self.is_polynomial:
            return {"name": self.name}
        return {
            "name": self.name,
            "d": self.d,
            "r": self.r,
            "sigma": [[p.to_list() for p in row] for row in self.sigma_polys],
            "drift": [p.to_list() for p in self.drift_polys],
        }


def polynomial_model(sigma: Sequence[Sequence[Poly]], drift: Sequence[Poly], *, name: str = "polynomial",
                     self_adjoint: bool = False) -> CoefficientModel:
    sigma = tuple(tuple(row) for row in sigma)
    drift = tuple(drift)
    d = len(drift)
    r = len(sigma[0]) if sigma else 0
    if len(sigma) != d or any(len(row) != r for row in sigma):
        raise ValueError("sigma must be a d x r table of polynomials")

    def sigma_deriv(beta, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (d, r))
        for i in range(d):
            for a in range(r):
                out[..., i, a] = sigma[i][a].deriv(beta)(x)
        return out

    def drift_deriv(beta, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (d,))
        for i in range(d):
            out[..., i] = drift[i].deriv(beta)(x)
        return out

    degs = [p.degree for row in sigma for p in row] + [p.degree for p in drift]
    return CoefficientModel(
        d=d, r=r, sigma_deriv=sigma_deriv, drift_deriv=drift_deriv, max_order=64,
        is_constant=max(degs, default=0) == 0, is_linear=max(degs, default=0) <= 1,
        self_adjoint=self_adjoint, name=name, sigma_polys=sigma, drift_polys=drift,
    )


def constant_model(sigma, drift, *, name: str = "constant") -> CoefficientModel:
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    drift = np.atleast_1d(np.asarray(drift, dtype=float))
    d, r = sigma.shape
    polys = [[Poly.const(d, sigma[i, a]) for a in range(r)] for i in range(d)]
    b = [Poly.const(d, drift[i]) for i in range(d)]
    # constant sigma with zero drift: L = L* (both are (1/2) sum a_ij d_ij)
    return polynomial_model(polys, b, name=name, self_adjoint=not np.any(drift))


def brownian(d: int = 1, scale: float = 1.0) -> CoefficientModel:
    return constant_model(scale * np.eye(d), np.zeros(d), name="brownian")


def ornstein_uhlenbeck(d: int = 1, rate: float = 1.0, scale: float = 1.0) -> CoefficientModel:
    polys = [[Poly.const(d, scale if i == a else 0.0) for a in range(d)] for i in range(d)]
    b = [Poly.coord(d, i, -rate) for i in range(d)]
    return polynomial_model(polys, b, name="ou")


def zero_model(d: int = 1) -> CoefficientModel:
    return constant_model(np.zeros((d, d)), np.zeros(d), name="zero")


def model_from_lists(d: int, sigma: Sequence, drift: Sequence, *, name: str = "polynomial",
                     self_adjoint: bool = False) -> CoefficientModel:
    """Polynomial model from nested lists: sigma[i][a] and drift[i] in ``Poly.from_list`` form."""
    polys = [[Poly.from_list(d, s) for s in row] for row in sigma]
    b = [Poly.from_list(d, s) for s in drift]
    return polynomial_model(polys, b, name=name, self_adjoint=self_adjoint)
