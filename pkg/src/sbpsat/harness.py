"""End-to-end experiments: mesh-refinement study and long-time energy study.

Each run builds the operator, the mesh, the projected velocity field and the
semi-discretization, then integrates with RK4 and collects metrics.  Results
are written as one CSV row per run plus a JSON summary.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from sbpsat.cubature import normalize_family
from sbpsat.divfree import project_field, velocity_error
from sbpsat.mesh import CurvedMesh, build_mesh
from sbpsat.operators import SbpOperatorSet, build_operator
from sbpsat.solver import (Discretization, NonFiniteState, SolverConfig, compute_dt, make_rhs,
                           normalize_form, rk4_advance)

log = logging.getLogger(__name__)

CSV_COLUMNS = ("experiment", "family", "p", "N", "dt", "steps", "l2_error", "conservation", "energy_error")
HISTORY_STRIDE = 100


# ---------------------------------------------------------------- analytic data

def ic_bell(x, y):
    """Compactly supported C^4 bump of height 2 on top of the constant 1."""
    x = np.asarray(x, dtype=float)
    rho2 = (x - 0.5) ** 2 + (np.asarray(y, dtype=float) - 0.5) ** 2
    return np.where(rho2 <= 0.25, 1.0 - (4.0 * rho2 - 1.0) ** 5, 1.0)


def ic_exp(x, y):
    return np.exp(np.asarray(x, dtype=float) * np.asarray(y, dtype=float))


def velocity_constant(x, y):
    x = np.asarray(x, dtype=float)
    return np.ones_like(x), np.ones_like(x)


def velocity_confined(x, y):
    """Divergence-free cellular flow tangent to the boundary of the unit square."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
            -np.pi * np.cos(np.pi * x) * np.sin(np.pi * y))


INITIAL_CONDITIONS: dict[str, Callable] = {"bell": ic_bell, "exp": ic_exp}
VELOCITIES: dict[str, Callable] = {"constant": velocity_constant, "confined": velocity_confined}


# ---------------------------------------------------------------- metrics

def _norm_weights(mesh: CurvedMesh, ops: SbpOperatorSet) -> np.ndarray:
    return ops.H[None, :] * mesh.J


def normalized_l2_error(u, u_exact, mesh: CurvedMesh, ops: SbpOperatorSet) -> float:
    w = _norm_weights(mesh, ops)
    diff = np.asarray(u) - np.asarray(u_exact)
    return float(np.sqrt(np.sum(w * diff * diff) / np.sum(w * np.asarray(u_exact) ** 2)))


def conservation_metric(u0, u, mesh: CurvedMesh, ops: SbpOperatorSet) -> float:
    w = _norm_weights(mesh, ops)
    return float(abs(np.sum(w * u0) - np.sum(w * u)))


def energy(u, mesh: CurvedMesh, ops: SbpOperatorSet) -> float:
    return float(np.sum(_norm_weights(mesh, ops) * np.asarray(u) ** 2))


def energy_metrics(u0, u, history, mesh: CurvedMesh, ops: SbpOperatorSet) -> tuple[float, np.ndarray]:
    """Signed energy error ``E(u0) - E(u)`` and the normalized history ``E(t)/E(u0) - 1``.

    ``history`` holds energies (already computed) at the sampled times.
    """
    e0 = energy(u0, mesh, ops)
    return e0 - energy(u, mesh, ops), np.asarray(history, dtype=float) / e0 - 1.0


def fit_rate(N: Sequence[int], values: Sequence[float]) -> float:
    """Least-squares slope of ``log|value|`` against ``log h`` (``h = 1/N``)."""
    h = 1.0 / np.asarray(N, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    if len(h) < 2 or np.any(v <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(v), 1)[0])


# ---------------------------------------------------------------- experiment records

@dataclass
class ExperimentSpec:
    experiment: str
    family: str
    p: int
    N: tuple[int, ...] = (12, 24, 36)
    mapping: str = "curvilinear"
    velocity: str = "constant"
    ic: str = "bell"
    form: str = "skew"
    sat_variant: str = "upwind"
    final_time: float = 1.0
    cfl_fraction: float = 0.5
    out_dir: str | None = None

    def __post_init__(self):
        self.family = normalize_family(self.family)
        self.form = normalize_form(self.form)
        self.N = tuple(int(n) for n in self.N)
        if any(n < 1 for n in self.N):
            raise ValueError("N values must be >= 1")
        if self.ic not in INITIAL_CONDITIONS:
            raise ValueError(f"unknown initial condition {self.ic!r}")
        if self.velocity not in VELOCITIES:
            raise ValueError(f"unknown velocity {self.velocity!r}")

    @classmethod
    def convergence(cls, family: str, p: int, N=(12, 24, 36), **kw) -> "ExperimentSpec":
        return cls("convergence", family, p, N, **kw)

    @classmethod
    def robustness(cls, family: str, p: int, form: str = "skew", **kw) -> "ExperimentSpec":
        kw.setdefault("N", (12,))
        kw.setdefault("mapping", "identity")
        return cls("robustness", family, p, velocity="confined", ic="exp", form=form,
                   final_time=10.0, **kw)


@dataclass
class SolveReport:
    experiment: str
    family: str
    p: int
    N: int
    form: str
    sat_variant: str
    mapping: str
    dt: float
    steps: int
    l2_error: float
    conservation: float
    energy_error: float
    initial_mass: float
    initial_energy: float
    max_energy_change: float
    velocity_error: float
    wall_time: float
    status: str = "ok"
    history_t: list[float] = field(default_factory=list)
    history: list[float] = field(default_factory=list)

    def csv_row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("history_t")
        d.pop("history")
        return d


def setup(family: str, p: int, N: int, mapping: str, velocity: str):
    ops = build_operator(family, p)
    mesh = build_mesh(N, mapping, ops)
    fld = project_field(mesh, ops, VELOCITIES[velocity])
    return ops, mesh, fld, Discretization(ops, mesh, fld)


def run_single(spec: ExperimentSpec, N: int, exact: Callable | None = None,
               record_history: bool = False) -> SolveReport:
    """One time integration; ``exact(x, y)`` is the exact solution at the final time."""
    t0 = time.perf_counter()
    ops, mesh, fld, disc = setup(spec.family, spec.p, N, spec.mapping, spec.velocity)
    config = SolverConfig.for_operator(spec.family, spec.p, form=spec.form, sat_variant=spec.sat_variant,
                                       cfl_fraction=spec.cfl_fraction, final_time=spec.final_time)
    dt = compute_dt(mesh, fld, config)
    ic = INITIAL_CONDITIONS[spec.ic]
    u0 = ic(mesh.xy[..., 0], mesh.xy[..., 1])
    e0 = disc.energy(u0)
    times, energies = [0.0], [e0]
    max_change = [0.0]

    def sample(step, t, u):
        e = disc.energy(u)
        max_change[0] = max(max_change[0], e / e0 - 1.0)
        if record_history:
            times.append(t)
            energies.append(e)

    status = "ok"
    try:
        u, steps = rk4_advance(u0, make_rhs(disc, config), dt, spec.final_time, callback=sample)
    except NonFiniteState as exc:
        log.warning("%s %s p=%d N=%d: %s", spec.experiment, spec.family, spec.p, N, exc)
        status, u, steps = "nonfinite", np.full_like(u0, np.nan), exc.step
        max_change[0] = float("inf")

    ue = exact(mesh.xy[..., 0], mesh.xy[..., 1]) if exact is not None else None
    l2 = normalized_l2_error(u, ue, mesh, ops) if ue is not None else float("nan")
    energy_error, _ = energy_metrics(u0, u, [], mesh, ops)
    return SolveReport(
        experiment=spec.experiment, family=spec.family, p=spec.p, N=N, form=spec.form,
        sat_variant=spec.sat_variant, mapping=mesh.mapping, dt=dt, steps=steps, l2_error=l2,
        conservation=conservation_metric(u0, u, mesh, ops), energy_error=energy_error,
        initial_mass=disc.mass(u0), initial_energy=e0, max_energy_change=max_change[0],
        velocity_error=velocity_error(fld, mesh, ops), wall_time=time.perf_counter() - t0,
        status=status, history_t=times, history=list(np.asarray(energies) / e0 - 1.0),
    )


@dataclass
class ConvergenceResult:
    spec: ExperimentSpec
    reports: list[SolveReport]
    l2_rate: float
    energy_rate: float

    def summary(self) -> dict:
        return {"family": self.spec.family, "p": self.spec.p, "N": list(self.spec.N),
                "l2_rate": self.l2_rate, "energy_rate": self.energy_rate,
                "runs": [r.summary() for r in self.reports]}


def run_convergence(spec: ExperimentSpec) -> ConvergenceResult:
    """Refinement study; rates are fitted over the three finest meshes."""
    ic = INITIAL_CONDITIONS[spec.ic]
    reports = []
    for N in spec.N:
        # with unit velocity on the unit torus the solution returns to the IC at integer times
        exact = ic if (spec.velocity == "constant" and float(spec.final_time).is_integer()) else None
        reports.append(run_single(spec, N, exact=exact))
        log.info("convergence %s p=%d N=%d err=%.3e", spec.family, spec.p, N, reports[-1].l2_error)
    finest = sorted(reports, key=lambda r: r.N)[-3:]
    Ns = [r.N for r in finest]
    return ConvergenceResult(spec, reports, fit_rate(Ns, [r.l2_error for r in finest]),
                             fit_rate(Ns, [r.energy_error for r in finest]))


def run_robustness(spec: ExperimentSpec) -> SolveReport:
    return run_single(spec, spec.N[0], exact=None, record_history=True)


# ---------------------------------------------------------------- output

def write_csv(reports: Sequence[SolveReport], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in reports:
            w.writerow(r.csv_row())


def write_history_csv(report: SolveReport, path, stride: int = HISTORY_STRIDE) -> None:
    """Normalized energy change at every ``stride``-th step (plus the final step)."""
    idx = list(range(0, len(report.history), stride))
    if report.history and idx[-1] != len(report.history) - 1:
        idx.append(len(report.history) - 1)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "energy_change"])
        for i in idx:
            w.writerow([i, repr(report.history_t[i]), repr(report.history[i])])


def write_json(data: dict, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, default=float, allow_nan=True))
