"""Symmetry orbits of the reference triangle and the offline moment solve.

The shipped cubature tables in :mod:`sbpsat.cubature` were produced with
:func:`search_rules`; rerun ``python -m sbpsat.orbits`` to regenerate them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

# number of free barycentric parameters and orbit size per orbit type
ORBIT_TYPES: dict[str, tuple[int, int]] = {
    "centroid": (0, 1),
    "vertex": (0, 3),
    "midedge": (0, 3),
    "edge": (1, 6),
    "s21": (1, 3),
    "s111": (2, 6),
}


def orbit_points(kind: str, params=()) -> np.ndarray:
    """Return the ``(m, 2)`` reference coordinates of one symmetry orbit.

    Barycentric coordinates ``(l0, l1, l2)`` map to ``(xi, eta) = (l1, l2)``.
    Points are emitted in a fixed order so regenerated tables are stable.
    """
    if kind == "centroid":
        bary = [(1 / 3, 1 / 3, 1 / 3)]
    elif kind == "vertex":
        bary = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    elif kind == "midedge":
        bary = [(0.0, 0.5, 0.5), (0.5, 0.0, 0.5), (0.5, 0.5, 0.0)]
    elif kind == "edge":
        (a,) = params
        b = 1.0 - a
        bary = [(0.0, a, b), (0.0, b, a), (b, 0.0, a),
                (a, 0.0, b), (a, b, 0.0), (b, a, 0.0)]
    elif kind == "s21":
        (a,) = params
        c = 1.0 - 2.0 * a
        bary = [(c, a, a), (a, c, a), (a, a, c)]
    elif kind == "s111":
        a, b = params
        c = 1.0 - a - b
        bary = sorted(itertools.permutations((a, b, c)))
    else:
        raise ValueError(f"unknown orbit type: {kind!r}")
    return np.array([(l1, l2) for (_, l1, l2) in bary], dtype=float)


@dataclass(frozen=True)
class OrbitLayout:
    """Ordered list of orbit types making up a symmetric rule."""

    kinds: tuple[str, ...]

    @property
    def nparams(self) -> int:
        return sum(ORBIT_TYPES[k][0] for k in self.kinds)

    @property
    def npoints(self) -> int:
        return sum(ORBIT_TYPES[k][1] for k in self.kinds)

    def unpack(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split ``z = [orbit params..., orbit weights...]`` into nodes and weights."""
        nodes, weights = [], []
        pos = 0
        w = z[self.nparams:]
        for k, kind in enumerate(self.kinds):
            npar, size = ORBIT_TYPES[kind]
            pts = orbit_points(kind, z[pos:pos + npar])
            pos += npar
            nodes.append(pts)
            weights.append(np.full(size, w[k]))
        return np.vstack(nodes), np.concatenate(weights)


def _moment(i: int, j: int) -> float:
    return math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)


def moment_residual(layout: OrbitLayout, z: np.ndarray, degree: int) -> np.ndarray:
    nodes, weights = layout.unpack(z)
    res = []
    for d in range(degree + 1):
        for i in range(d + 1):
            j = d - i
            val = weights @ (nodes[:, 0] ** i * nodes[:, 1] ** j)
            res.append((val - _moment(i, j)) / _moment(i, j))
    return np.array(res)


def _admissible(layout: OrbitLayout, z: np.ndarray, interior_tol: float) -> bool:
    nodes, weights = layout.unpack(z)
    if np.any(weights <= 0):
        return False
    pos = 0
    for kind in layout.kinds:
        npar, _ = ORBIT_TYPES[kind]
        par = z[pos:pos + npar]
        pos += npar
        if kind == "edge" and not (interior_tol < par[0] < 0.5 - interior_tol):
            return False
        if kind == "s21" and not (interior_tol < par[0] < 0.5 - interior_tol
                                  and abs(par[0] - 1 / 3) > interior_tol):
            return False
        if kind == "s111":
            a, b = par
            c = 1 - a - b
            if min(a, b, c) <= interior_tol:
                return False
            if min(abs(a - b), abs(b - c), abs(a - c)) <= interior_tol:
                return False
    # no coincident nodes
    diff = nodes[:, None, :] - nodes[None, :, :]
    dist = np.sqrt((diff**2).sum(-1)) + np.eye(len(nodes))
    return bool(dist.min() > 1e-6)


def min_node_spacing(nodes: np.ndarray) -> float:
    diff = nodes[:, None, :] - nodes[None, :, :]
    dist = np.sqrt((diff**2).sum(-1)) + 10 * np.eye(len(nodes))
    return float(dist.min())


def search_rules(layout: OrbitLayout, degree: int, ntrials: int = 400,
                 seed: int = 0, interior_tol: float = 1e-8) -> list[np.ndarray]:
    """Multi-start Gauss-Newton on the moment equations of ``layout``.

    Returns the distinct admissible parameter vectors (positive weights,
    proper orbits) whose relative moment residual is below 1e-13.
    """
    rng = np.random.default_rng(seed)
    found: list[np.ndarray] = []
    nw = len(layout.kinds)
    for _ in range(ntrials):
        z0 = []
        for kind in layout.kinds:
            npar, _ = ORBIT_TYPES[kind]
            if kind == "s111":
                a, b = rng.dirichlet((1, 1, 1))[:2]
                z0 += [a, b]
            elif npar:
                z0.append(rng.uniform(0.02, 0.48))
        z0 += list(rng.uniform(0.1, 1.0, nw) / (2 * layout.npoints))
        sol = least_squares(lambda z: moment_residual(layout, z, degree),
                            np.array(z0), xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=2000)
        if np.max(np.abs(sol.fun)) > 1e-13:
            continue
        if not _admissible(layout, sol.x, interior_tol):
            continue
        nodes, _ = layout.unpack(sol.x)
        if any(_same_nodes(nodes, layout.unpack(f)[0]) for f in found):
            continue
        found.append(sol.x)
    return found


def _same_nodes(a: np.ndarray, b: np.ndarray, tol: float = 1e-8) -> bool:
    if a.shape != b.shape:
        return False
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return bool(np.all(d.min(axis=1) < tol))


if __name__ == "__main__":  # pragma: no cover - offline table generation
    import sys

    layouts = {
        ("gamma", 3): (OrbitLayout(("vertex", "edge", "s21")), 5),
        ("gamma", 4): (OrbitLayout(("vertex", "midedge", "edge", "s21", "s21")), 7),
        ("omega", 2): (OrbitLayout(("s21", "s21")), 4),
        ("omega", 3): (OrbitLayout(("centroid", "s21", "s111")), 5),
        ("omega", 4): (OrbitLayout(("s21", "s111", "s111")), 7),
    }
    for key, (layout, deg) in layouts.items():
        sols = search_rules(layout, deg)
        print(key, layout.kinds, len(sols), file=sys.stderr)
        for z in sols:
            nodes, w = layout.unpack(z)
            print("   dr=%.4f ratio=%.3f z=%s" % (
                min_node_spacing(nodes), w.max() / w.min(),
                np.array2string(z, precision=17, separator=", ")))
