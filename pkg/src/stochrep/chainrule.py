"""Multivariate chain rule for d^alpha (phi o f).

The expansion is built by differentiating the composite one axis at a time:

    d^alpha (phi o f)(x) = sum_gamma C_gamma(x) (d^gamma phi)(f(x))

where each C_gamma is a polynomial, with integer coefficients, in the symbols
d^beta f_j(x).  A symbol is the pair (j, beta); a monomial is a sorted tuple
of symbols.
"""
from __future__ import annotations

from collections import defaultdict
from functools import lru_cache
from typing import Mapping

import numpy as np

Symbol = tuple[int, tuple[int, ...]]
Monomial = tuple[Symbol, ...]


def _bump(idx: tuple[int, ...], axis: int) -> tuple[int, ...]:
    return idx[:axis] + (idx[axis] + 1,) + idx[axis + 1 :]


def _differentiate(expansion, axis: int, d_in: int, d_out: int):
    out: dict = defaultdict(lambda: defaultdict(int))
    for gamma, poly in expansion.items():
        for mono, c in poly.items():
            # product rule on the coefficient polynomial
            for pos, (j, beta) in enumerate(mono):
                new = mono[:pos] + ((j, _bump(beta, axis)),) + mono[pos + 1 :]
                out[gamma][tuple(sorted(new))] += c
            # chain rule on (d^gamma phi)(f(x))
            for j in range(d_out):
                unit = tuple(1 if a == axis else 0 for a in range(d_in))
                new = tuple(sorted(mono + ((j, unit),)))
                out[_bump(gamma, j)][new] += c
    return {g: {m: c for m, c in p.items() if c} for g, p in out.items() if any(p.values())}


@lru_cache(maxsize=None)
def chain_rule_expansion(alpha: tuple[int, ...], d_out: int) -> tuple:
    """Symbolic expansion of d^alpha(phi o f), f: R^d_in -> R^d_out.

    Returns a tuple of (gamma, ((coef, monomial), ...)) pairs, ordered by
    gamma.  ``d_in`` is len(alpha).
    """
    d_in = len(alpha)
    expansion = {(0,) * d_out: {(): 1}}
    for axis in range(d_in):
        for _ in range(alpha[axis]):
            expansion = _differentiate(expansion, axis, d_in, d_out)
    return tuple(
        (gamma, tuple(sorted(((c, m) for m, c in poly.items()), key=lambda t: t[1])))
        for gamma, poly in sorted(expansion.items())
    )


def chain_rule_coefficients(alpha, f_derivs: Mapping[tuple[int, ...], np.ndarray]) -> dict:
    """Numerical C_gamma for d^alpha(phi o f) = sum_gamma C_gamma (d^gamma phi)(f).

    ``f_derivs[beta]`` holds d^beta f with the output component on the last
    axis; leading axes broadcast (e.g. paths x points).
    """
    alpha = tuple(int(a) for a in alpha)
    some = next(iter(f_derivs.values()))
    d_out = some.shape[-1]
    shape = some.shape[:-1]
    out = {}
    for gamma, terms in chain_rule_expansion(alpha, d_out):
        acc = np.zeros(shape)
        for c, mono in terms:
            term = np.full(shape, float(c))
            for j, beta in mono:
                try:
                    term = term * f_derivs[beta][..., j]
                except KeyError:
                    raise KeyError(f"missing derivative data d^{beta} f") from None
            acc = acc + term
        out[gamma] = acc
    return out


def faa_di_bruno(alpha, f_derivs: Mapping[tuple[int, ...], np.ndarray]) -> dict:
    """Coefficients e_gamma with d^alpha(phi o f)(x) = sum_gamma e_gamma <phi, d^gamma delta_f(x)>.

    Since <d^gamma delta_y, phi> = (-1)^|gamma| (d^gamma phi)(y), this is
    e_gamma = (-1)^|gamma| C_gamma.
    """
    coeffs = chain_rule_coefficients(alpha, f_derivs)
    return {g: (-c if sum(g) % 2 else c) for g, c in coeffs.items()}


def derivative_indices(d: int, order: int, start: int = 1) -> list[tuple[int, ...]]:
    """Multi-indices beta with start <= |beta| <= order, graded lexicographic."""
    from .hermite import multi_indices

    return [tuple(int(v) for v in k) for k in multi_indices(d, order) if sum(k) >= start]
