"""Semi-discrete advection operator on a periodic SBP mesh and RK4 time stepping.

Arrays are laid out element-major: the solution is ``u[e, i]`` for element
``e`` and volume node ``i``.  Each right-hand-side evaluation gathers face
values for all elements, looks up the neighbour values through the periodic
pairing, and scatters face penalties back with one contraction per element,
so there are no write conflicts between faces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from sbpsat.cubature import normalize_family
from sbpsat.divfree import DiscreteVelocityField
from sbpsat.mesh import CurvedMesh
from sbpsat.operators import SbpOperatorSet

SKEW = "skew"
DIVERGENCE = "divergence"
FORMS = (SKEW, DIVERGENCE)

# (family, p) -> (maximal stable Courant number, minimum reference node spacing)
CFL_TABLE = {
    ("gamma", 1): (0.7500, 1.0000),
    ("gamma", 2): (1.3398, 0.2357),
    ("gamma", 3): (1.2045, 0.1487),
    ("gamma", 4): (1.1597, 0.0949),
    ("omega", 1): (0.5217, 0.5000),
    ("omega", 2): (0.4130, 0.3378),
    ("omega", 3): (0.3083, 0.2402),
    ("omega", 4): (0.3428, 0.1636),
}


class ZeroVelocity(ValueError):
    pass


class NonFiniteState(FloatingPointError):
    def __init__(self, step: int, time: float):
        super().__init__(f"non-finite solution at step {step} (t={time:.6g})")
        self.step = step
        self.time = time


def normalize_form(form: str) -> str:
    key = form.lower()
    if key in ("skew", "skew-symmetric", "split"):
        return SKEW
    if key in ("div", "divergence"):
        return DIVERGENCE
    raise ValueError(f"unknown form {form!r}")


@dataclass(frozen=True)
class SolverConfig:
    form: str = SKEW
    sat_variant: str = "upwind"
    cfl_fraction: float = 0.5
    cfl_max: float = 1.0
    delta_r: float = 1.0
    final_time: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.cfl_fraction <= 1.0:
            raise ValueError("cfl_fraction must be in (0, 1]")
        object.__setattr__(self, "form", normalize_form(self.form))
        if self.sat_variant not in ("upwind", "symmetric"):
            raise ValueError(f"unknown SAT variant {self.sat_variant!r}")

    @classmethod
    def for_operator(cls, family: str, p: int, **kwargs) -> "SolverConfig":
        cfl_max, dr = CFL_TABLE[normalize_family(family), p]
        return cls(cfl_max=cfl_max, delta_r=dr, **kwargs)


class Discretization:
    """Precomputed arrays for evaluating the semi-discrete right-hand side."""

    def __init__(self, ops: SbpOperatorSet, mesh: CurvedMesh, field: DiscreteVelocityField):
        if mesh.nbr_elem is None:
            raise ValueError("mesh faces are not paired")
        self.ops = ops
        self.mesh = mesh
        self.field = field
        self.DxiT = ops.Dxi.T.copy()
        self.DetaT = ops.Deta.T.copy()
        self.R = ops.R
        self.B = ops.B
        self.H = ops.H
        self.lam_xi = np.ascontiguousarray(field.lam_xi)
        self.lam_eta = np.ascontiguousarray(field.lam_eta)
        n = ops.normals
        self.lam_face = n[None, :, 0, None] * self.lam_xi[:, None, :] + n[None, :, 1, None] * self.lam_eta[:, None, :]
        self.b_lam = field.b_lambda(ops.B)  # (E, 3, nu) own outward
        self.abs_b_lam = np.abs(self.b_lam)
        self.nbr = (mesh.nbr_elem[..., None], mesh.nbr_face[..., None], mesh.nbr_perm)
        self.J = mesh.J
        self.HJ = ops.H[None, :] * mesh.J

    def face_values(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("jvn,en->ejv", self.R, u)

    def sat(self, u: np.ndarray, variant: str = "upwind") -> np.ndarray:
        """``H^{-1}`` times the accumulated face penalties, per element."""
        uf = self.face_values(u)
        ulam = np.einsum("jvn,ejn->ejv", self.R, self.lam_face * u[:, None, :])
        un = uf[self.nbr]
        flux = self.B[None] * ulam
        if variant == "upwind":
            flux -= self.abs_b_lam * uf + (self.b_lam - self.abs_b_lam) * un
        elif variant == "symmetric":
            flux -= self.b_lam * un
        else:
            raise ValueError(f"unknown SAT variant {variant!r}")
        return 0.5 * np.einsum("jvn,ejv->en", self.R, flux) / self.H[None, :]

    def mass(self, u: np.ndarray) -> float:
        return float(np.sum(self.HJ * u))

    def energy(self, u: np.ndarray) -> float:
        return float(np.sum(self.HJ * u * u))


def residual_skew(u: np.ndarray, disc: Discretization, variant: str = "upwind") -> np.ndarray:
    """``du/dt`` of the skew-symmetric split form (time derivative of ``J u`` divided by ``J``)."""
    lx, ly = disc.lam_xi, disc.lam_eta
    vol = (lx * u) @ disc.DxiT + (ly * u) @ disc.DetaT + lx * (u @ disc.DxiT) + ly * (u @ disc.DetaT)
    return (disc.sat(u, variant) - 0.5 * vol) / disc.J


def residual_divergence_form(u: np.ndarray, disc: Discretization, variant: str = "upwind") -> np.ndarray:
    """``du/dt`` of the unsplit (divergence) form with the same face penalties."""
    vol = (disc.lam_xi * u) @ disc.DxiT + (disc.lam_eta * u) @ disc.DetaT
    return (disc.sat(u, variant) - vol) / disc.J


def make_rhs(disc: Discretization, config: SolverConfig) -> Callable[[np.ndarray], np.ndarray]:
    fn = residual_skew if config.form == SKEW else residual_divergence_form
    variant = config.sat_variant
    return lambda u: fn(u, disc, variant)


def max_velocity(mesh: CurvedMesh, field: DiscreteVelocityField) -> float:
    """Largest computational-space speed; element components are scaled by ``h``."""
    return float(np.max(np.linalg.norm(field.lam, axis=-1))) / mesh.h


def compute_dt(mesh: CurvedMesh, field: DiscreteVelocityField, config: SolverConfig) -> float:
    speed = max_velocity(mesh, field)
    if speed == 0.0:
        raise ZeroVelocity("velocity field vanishes; time step undefined")
    return config.cfl_fraction * config.cfl_max * mesh.h * config.delta_r / speed


def rk4_step(u, rhs, dt):
    k1 = rhs(u)
    k2 = rhs(u + 0.5 * dt * k1)
    k3 = rhs(u + 0.5 * dt * k2)
    k4 = rhs(u + dt * k3)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def num_steps(dt: float, final_time: float) -> int:
    return max(1, math.ceil(final_time / dt - 1e-10))


def rk4_advance(u0, rhs, dt: float, final_time: float,
                callback: Callable[[int, float, np.ndarray], None] | None = None):
    """Classical RK4 to ``final_time``; only the last step is shortened.

    ``callback(step, t, u)`` is called after every step.  Returns
    ``(u, steps)``.  Raises :class:`NonFiniteState` on overflow or NaN.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = np.array(u0, dtype=float, copy=True)
    steps = num_steps(dt, final_time)
    t = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, steps + 1):
            h = final_time - t if k == steps else dt
            u = rk4_step(u, rhs, h)
            t = final_time if k == steps else t + dt
            if not np.isfinite(u).all():
                raise NonFiniteState(k, t)
            if callback is not None:
                callback(k, t, u)
    return u, steps
