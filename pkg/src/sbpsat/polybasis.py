"""Polynomial bases on the reference triangle with vertices (0,0), (1,0), (0,1)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import eval_jacobi, gammaln


class InvalidIndex(ValueError):
    pass


def num_basis(p: int) -> int:
    """Dimension of the total-degree ``p`` polynomial space in 2d."""
    return (p + 1) * (p + 2) // 2


def monomial_index(i: int, j: int) -> int:
    """1-based position of ``xi**i * eta**(j - i)`` in nondecreasing-degree order."""
    if not 0 <= i <= j:
        raise InvalidIndex(f"need 0 <= i <= j, got i={i}, j={j}")
    return j * (j + 1) // 2 + i + 1


def monomial_exponents(p: int) -> list[tuple[int, int]]:
    """``(xi exponent, eta exponent)`` for k = 1..num_basis(p)."""
    return [(i, j - i) for j in range(p + 1) for i in range(j + 1)]


def as_nodes(nodes) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim == 1:
        nodes = nodes.reshape(1, 2)
    if nodes.ndim != 2 or nodes.shape[1] != 2:
        raise ValueError(f"nodes must have shape (n, 2), got {nodes.shape}")
    return nodes


@dataclass(frozen=True)
class BasisEvaluation:
    """Basis values and first derivatives at a set of nodes (nodes x basis)."""

    values: np.ndarray
    dxi: np.ndarray
    deta: np.ndarray


def monomial_vandermonde(p: int, nodes) -> BasisEvaluation:
    nodes = as_nodes(nodes)
    xi, eta = nodes[:, 0], nodes[:, 1]
    exps = monomial_exponents(p)
    n = len(nodes)
    V = np.empty((n, len(exps)))
    Vx = np.zeros_like(V)
    Vy = np.zeros_like(V)
    for k, (a, b) in enumerate(exps):
        V[:, k] = xi**a * eta**b
        if a > 0:
            Vx[:, k] = a * xi ** (a - 1) * eta**b
        if b > 0:
            Vy[:, k] = b * xi**a * eta ** (b - 1)
    return BasisEvaluation(V, Vx, Vy)


def _jacobi_normalized(x, alpha: int, beta: int, n: int) -> np.ndarray:
    # orthonormal on [-1, 1] with weight (1-x)^alpha (1+x)^beta
    lognorm = ((alpha + beta + 1) * np.log(2.0) - np.log(2 * n + alpha + beta + 1)
               + gammaln(n + alpha + 1) + gammaln(n + beta + 1)
               - gammaln(n + alpha + beta + 1) - gammaln(n + 1))
    return eval_jacobi(n, alpha, beta, x) / np.exp(0.5 * lognorm)


def _jacobi_normalized_grad(x, alpha: int, beta: int, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    return np.sqrt(n * (n + alpha + beta + 1)) * _jacobi_normalized(x, alpha + 1, beta + 1, n - 1)


def orthonormal_vandermonde(p: int, nodes) -> BasisEvaluation:
    """Proriol-Koornwinder-Dubiner basis, orthonormal over the reference triangle.

    Uses the collapsed coordinates ``a = 2(1+r)/(1-s) - 1, b = s`` on the
    biunit triangle ``r, s = 2 xi - 1, 2 eta - 1``; the vertex ``s = 1`` is
    handled by the usual limit ``a = -1``.  Ordering is by total degree and
    then by the ``a``-degree, matching :func:`monomial_exponents`.
    """
    nodes = as_nodes(nodes)
    r = 2.0 * nodes[:, 0] - 1.0
    s = 2.0 * nodes[:, 1] - 1.0
    denom = 1.0 - s
    top = np.abs(denom) < 1e-14
    a = np.where(top, -1.0, 2.0 * (1.0 + r) / np.where(top, 1.0, denom) - 1.0)
    b = s

    n = len(nodes)
    nb = num_basis(p)
    V = np.empty((n, nb))
    Vr = np.empty((n, nb))
    Vs = np.empty((n, nb))
    k = 0
    for deg in range(p + 1):
        for i in range(deg + 1):
            j = deg - i
            fa = _jacobi_normalized(a, 0, 0, i)
            dfa = _jacobi_normalized_grad(a, 0, 0, i)
            gb = _jacobi_normalized(b, 2 * i + 1, 0, j)
            dgb = _jacobi_normalized_grad(b, 2 * i + 1, 0, j)
            half = 0.5 * (1.0 - b)
            V[:, k] = np.sqrt(2.0) * fa * gb * half**i * 2.0**i

            # derivatives on the biunit triangle (Hesthaven & Warburton's form)
            dr = dfa * gb
            if i > 0:
                dr = dr * half ** (i - 1)
            ds = dfa * (gb * (0.5 * (1.0 + a)))
            if i > 0:
                ds = ds * half ** (i - 1)
            tmp = dgb * half**i
            if i > 0:
                tmp = tmp - 0.5 * i * gb * half ** (i - 1)
            ds = ds + fa * tmp
            Vr[:, k] = 2.0 ** (i + 0.5) * dr
            Vs[:, k] = 2.0 ** (i + 0.5) * ds
            k += 1

    # biunit area 2 -> unit right triangle area 1/2: values scale by 2,
    # d/dxi = 2 d/dr
    return BasisEvaluation(2.0 * V, 4.0 * Vr, 4.0 * Vs)
