"""Dynamics on the speed sphere plus the spherical-calculus verification kit.

The limit of the stiff system constrains velocities to |omega| = r; what
remains of the interaction field is its tangential part
(I - omega (x) omega / r^2) a. The deterministic step is project-then-
renormalize (the tangency of the projected drift makes the renormalization
correction O(dt^2)); the diffusive step projects an ambient sqrt(2)-Gaussian
increment the same way, which realizes the intrinsic sphere Laplacian as its
weak generator (validated by the degree-1 eigenvalue test in the suite).

The remaining operations are executable identities: the intrinsic Laplacian
computed three ways (finite differences of the degree-zero homogeneous
extension, the projected-Hessian formula, and the explicit 3D polar formula)
must agree, as must the 3D divergence formula against symbolic oracles. The
coordinate operations exclude a small band around the poles; the dynamics
itself runs in Cartesian components and never touches a chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import noise
from .core import ModelParams, SphereEnsemble, moments
from .errors import MissingSnapshot, PoleSingularity, ValidationError, ZeroVelocity
from .eps_dynamics import total_energy
from .kernels import KernelSpec, acceleration_arrays

POLE_BAND = 1e-10  # excluded |sin(theta)| margin for chart-based operations


@dataclass(frozen=True)
class SphereRunConfig:
    params: ModelParams   # eps plays no role in the limit dynamics
    spec: KernelSpec
    dt: float
    T: float
    snapshot_stride: int = 100
    diffusion: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.T < self.dt:
            raise ValidationError(f"horizon T={self.T} shorter than one step dt={self.dt}")
        if self.snapshot_stride < 1:
            raise ValidationError(f"snapshot stride must be >= 1, got {self.snapshot_stride}")


@dataclass(frozen=True)
class SphereTrajectory:
    cfg: SphereRunConfig
    times: tuple
    snapshots: tuple
    moment_reports: tuple
    energies: tuple

    def __post_init__(self):
        if np.any(np.diff(np.asarray(self.times)) <= 0):
            raise ValidationError("snapshot times must be strictly increasing")

    def snapshot_at(self, t: float):
        tol = 0.5 * self.cfg.dt
        for tk, snap in zip(self.times, self.snapshots):
            if abs(tk - t) <= tol:
                return snap
        raise MissingSnapshot(f"no snapshot within dt/2 of t={t}")


@dataclass(frozen=True)
class TangentField:
    """Per-particle tangent vectors xi_i with omega_i . xi_i = 0 (to 1e-12 r)."""

    xi: np.ndarray

    def __post_init__(self):
        arr = np.array(self.xi, dtype=float, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "xi", arr)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.sqrt(np.sum(self.xi * self.xi, axis=1))))


def projected_field(ens: SphereEnsemble, spec: KernelSpec) -> TangentField:
    """Tangential part of the interaction field on a sphere ensemble, with the
    tangency tolerance checked at construction."""
    a = acceleration_arrays(ens.x, ens.omega, ens.w, spec)
    xi = tangential_projection(a, ens.omega)
    dots = np.abs(np.sum(xi * ens.omega, axis=1))
    norms = np.sqrt(np.sum(xi * xi, axis=1))
    if np.any(dots > 1e-12 * ens.r * np.maximum(norms, 1e-300)):
        raise ValidationError("projected field lost tangency beyond tolerance")
    return TangentField(xi=xi)


def tangential_projection(a, omega):
    """(I - omega (x) omega / |omega|^2) a, vectorized over rows.

    The measured |omega|^2 is used in the denominator so the result is
    orthogonal to omega to roundoff even when |omega| carries the 1e-12
    sphere tolerance.
    """
    a = np.asarray(a, dtype=float)
    omega = np.asarray(omega, dtype=float)
    single = a.ndim == 1
    a2 = a[None, :] if single else a
    o2 = omega[None, :] if single else omega
    coef = np.sum(o2 * a2, axis=1) / np.sum(o2 * o2, axis=1)
    out = a2 - coef[:, None] * o2
    return out[0] if single else out


def _renormalize(u, omega, r):
    # rows the update left untouched stay bitwise identical (a = 0 transport)
    norms = np.sqrt(np.sum(u * u, axis=1))
    out = u * (r / norms)[:, None]
    unchanged = np.all(u == omega, axis=1)
    if np.any(unchanged):
        out[unchanged] = omega[unchanged]
    return out


def step_limit(ens: SphereEnsemble, cfg: SphereRunConfig, step_index: int = 0) -> SphereEnsemble:
    """Transport by omega, then rotate omega by the projected field."""
    a = acceleration_arrays(ens.x, ens.omega, ens.w, cfg.spec)
    xi = tangential_projection(a, ens.omega)
    x = ens.x + cfg.dt * ens.omega
    omega = _renormalize(ens.omega + cfg.dt * xi, ens.omega, ens.r)
    return SphereEnsemble(x=x, omega=omega, w=ens.w, r=ens.r, time=ens.time + cfg.dt)


def step_limit_diffusive(ens: SphereEnsemble, cfg: SphereRunConfig,
                         step_index: int = 0) -> SphereEnsemble:
    """Projected Euler-Maruyama step: weak order 1 for drift plus intrinsic
    sphere diffusion."""
    a = acceleration_arrays(ens.x, ens.omega, ens.w, cfg.spec)
    shot = noise.gaussian_increments(cfg.rng_seed, noise.SPHERE_DYNAMICS,
                                     step_index, ens.omega.shape)
    # drift and noise projected separately so a zero draw reproduces the
    # deterministic step bit for bit
    xi = tangential_projection(a, ens.omega)
    eta = tangential_projection(shot, ens.omega)
    x = ens.x + cfg.dt * ens.omega
    u = ens.omega + cfg.dt * xi + math.sqrt(2.0 * cfg.dt) * eta
    omega = _renormalize(u, ens.omega, ens.r)
    return SphereEnsemble(x=x, omega=omega, w=ens.w, r=ens.r, time=ens.time + cfg.dt)


def simulate_limit(f_in: SphereEnsemble, cfg: SphereRunConfig) -> SphereTrajectory:
    n_steps = int(round(cfg.T / cfg.dt))
    if n_steps < 1:
        raise ValidationError("horizon too short for a single step")
    advance = step_limit_diffusive if cfg.diffusion else step_limit
    times = [f_in.time]
    snaps = [f_in]
    reports = [moments(f_in)]
    energies = [total_energy(f_in, cfg.spec)]
    ens = f_in
    for k in range(n_steps):
        ens = advance(ens, cfg, step_index=k)
        ens = replace(ens, time=f_in.time + (k + 1) * cfg.dt)
        if (k + 1) % cfg.snapshot_stride == 0 or (k + 1) == n_steps:
            times.append(ens.time)
            snaps.append(ens)
            reports.append(moments(ens))
            energies.append(total_energy(ens, cfg.spec))
    return SphereTrajectory(cfg=cfg, times=tuple(times), snapshots=tuple(snaps),
                            moment_reports=tuple(reports), energies=tuple(energies))


# ---------------------------------------------------------------------------
# Spherical calculus: three independent routes to the intrinsic Laplacian.
# ---------------------------------------------------------------------------

def laplace_beltrami_via_extension(phi, omega, r: float, step: float | None = None) -> float:
    """Intrinsic Laplacian of phi at omega computed as the ambient Laplacian
    of the degree-zero homogeneous extension Phi(y) = phi(r y / |y|),
    by central differences with step ~ 1e-4 r."""
    omega = np.asarray(omega, dtype=float)
    h = 1e-4 * r if step is None else step
    d = omega.shape[0]

    def ext(y):
        norm = math.sqrt(float(np.sum(y * y)))
        return float(phi(y * (r / norm)))

    center = ext(omega)
    total = 0.0
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        total += ext(omega + e) - 2.0 * center + ext(omega - e)
    return total / (h * h)


def zero_hom_laplacian_formula(phi, v, r: float, step: float | None = None) -> float:
    """Off-sphere evaluation of the same Laplacian through the projected-
    Hessian identity

        (r/|v|)^2 (I - vv/|v|^2) : Hess(phi)(r v/|v|)
            - 2 (r/|v|) (v . grad(phi)(r v/|v|)) / |v|^2

    with the derivatives of phi taken by central differences. The scalar
    coefficient 2 in the radial term is the 3D value, so this route is a
    three-dimensional verification tool."""
    v = np.asarray(v, dtype=float)
    vnorm = math.sqrt(float(np.sum(v * v)))
    if vnorm == 0.0:
        raise ZeroVelocity("formula undefined at v = 0")
    h = 1e-4 * r if step is None else step
    d = v.shape[0]
    u = v * (r / vnorm)

    def f(y):
        return float(phi(y))

    grad = np.zeros(d)
    hess = np.zeros((d, d))
    center = f(u)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        fp, fm = f(u + ei), f(u - ei)
        grad[i] = (fp - fm) / (2.0 * h)
        hess[i, i] = (fp - 2.0 * center + fm) / (h * h)
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            val = (f(u + ei + ej) - f(u + ei - ej)
                   - f(u - ei + ej) + f(u - ei - ej)) / (4.0 * h * h)
            hess[i, j] = hess[j, i] = val
    vhat = v / vnorm
    proj_hess = float(np.trace(hess)) - float(vhat @ hess @ vhat)
    radial = float(np.dot(v, grad)) / (vnorm * vnorm)
    scale = r / vnorm
    return scale * scale * proj_hess - 2.0 * scale * radial


# ---------------------------------------------------------------------------
# 3D charts: omega = r (cos(theta) cos(phi), cos(theta) sin(phi), sin(theta)),
# theta in (-pi/2, pi/2), phi in [0, 2 pi).
# ---------------------------------------------------------------------------

def spherical_coords_3d(omega, r: float):
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (3,):
        raise ValidationError(f"expected a 3D point, got shape {omega.shape}")
    norm = math.sqrt(float(np.sum(omega * omega)))
    if abs(norm - r) > 1e-9 * r:
        raise ValidationError(f"point is off the radius-{r} sphere by {abs(norm - r):.3e}")
    theta = math.asin(max(-1.0, min(1.0, omega[2] / r)))
    phi = math.atan2(omega[1], omega[0]) % (2.0 * math.pi)
    return theta, phi


def sphere_point_3d(theta: float, phi: float, r: float) -> np.ndarray:
    return r * np.array([math.cos(theta) * math.cos(phi),
                         math.cos(theta) * math.sin(phi),
                         math.sin(theta)])


def tangent_frame_3d(theta: float, phi: float):
    """Coordinate frame (e_theta, e_phi) with |e_theta| = 1, |e_phi| = cos(theta)."""
    if abs(math.sin(theta)) >= 1.0 - POLE_BAND:
        raise PoleSingularity(f"frame undefined within {POLE_BAND} of a pole")
    e_theta = np.array([-math.sin(theta) * math.cos(phi),
                        -math.sin(theta) * math.sin(phi),
                        math.cos(theta)])
    e_phi = np.array([-math.cos(theta) * math.sin(phi),
                      math.cos(theta) * math.cos(phi),
                      0.0])
    return e_theta, e_phi


def _check_pole(theta):
    if abs(math.sin(theta)) >= 1.0 - POLE_BAND:
        raise PoleSingularity("operation excluded near the poles")


def spherical_laplacian_3d(F, theta: float, phi: float, r: float,
                           step: float = 1e-4) -> float:
    """(1/r^2) { (1/cos t) d_t(cos t d_t F) + (1/cos^2 t) d_pp F } by central
    finite differences of the chart function F(theta, phi)."""
    _check_pole(theta)
    h = step
    f0 = F(theta, phi)
    f_tp = F(theta + h, phi)
    f_tm = F(theta - h, phi)
    d_theta = (f_tp - f_tm) / (2.0 * h)
    d2_theta = (f_tp - 2.0 * f0 + f_tm) / (h * h)
    d2_phi = (F(theta, phi + h) - 2.0 * f0 + F(theta, phi - h)) / (h * h)
    cos_t = math.cos(theta)
    return (d2_theta - math.tan(theta) * d_theta + d2_phi / (cos_t * cos_t)) / (r * r)


def spherical_divergence_3d(xi_theta, xi_phi, theta: float, phi: float, r: float,
                            step: float = 1e-4) -> float:
    """(1/r) { (1/cos t) d_t(xi_theta cos t) + d_p xi_phi } for a tangent field
    given through its frame components."""
    _check_pole(theta)
    h = step
    cos_t = math.cos(theta)

    def g(t):
        return xi_theta(t, phi) * math.cos(t)

    d_theta = (g(theta + h) - g(theta - h)) / (2.0 * h)
    d_phi = (xi_phi(theta, phi + h) - xi_phi(theta, phi - h)) / (2.0 * h)
    return (d_theta / cos_t + d_phi) / r
