"""Interaction ingredients: pair potential, alignment weight, mean-field field.

The acceleration felt by particle i is the exact pairwise sum

    a_i = - sum_j w_j grad_U(x_i - x_j) + sum_j w_j h(x_i - x_j) (v_j - v_i)

evaluated brute force in O(N^2): correctness over speed at desk scale. The
j = i term is kept in the loop (grad_U(0) = 0 for the even built-in
potentials, and the alignment difference vanishes), so the inner sum is
branch-free.

Every KernelSpec carries certified sup-norm bounds for its ingredients; the
built-in families derive them in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import velocities
from .errors import BadKernelParams, ValidationError

# Row-block size for the pairwise sweep; keeps the (block, N, d) temporaries
# small enough to stay cache- and memory-friendly up to N = 4096.
_CHUNK = 512


@dataclass(frozen=True)
class KernelSpec:
    """A potential/weight pair with evaluators and certified bounds.

    Evaluators are vectorized over leading axes: potential and align_weight
    map (..., d) -> (...), the gradients map (..., d) -> (..., d), and
    hess_potential maps (d,) -> (d, d).
    """

    name: str
    params: dict
    potential: Callable
    grad_potential: Callable
    hess_potential: Callable
    align_weight: Callable
    grad_align_weight: Callable
    norm_U_hess: float
    norm_grad_U: float
    norm_h: float
    norm_grad_h: float

    def is_zero(self) -> bool:
        return self.norm_grad_U == 0.0 and self.norm_h == 0.0


@dataclass(frozen=True)
class FieldSample:
    """Per-particle acceleration vectors and their sup-norm."""

    a: np.ndarray       # (n, d)
    sup_norm: float

    def __post_init__(self):
        arr = np.array(self.a, dtype=float, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "a", arr)


def _zero_scalar(x):
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape[:-1])


def _zero_vector(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _gaussian_family(c_a, l_a, c_r, l_r):
    """U(x) = -c_a exp(-|x|^2/l_a^2) + c_r exp(-|x|^2/l_r^2), smooth and bounded
    with bounded derivatives of all orders (unlike the Morse potential, which
    is not twice differentiable at the origin)."""

    def u(x):
        x = np.asarray(x, dtype=float)
        rho2 = np.sum(x * x, axis=-1)
        return -c_a * np.exp(-rho2 / l_a**2) + c_r * np.exp(-rho2 / l_r**2)

    def grad_u(x):
        x = np.asarray(x, dtype=float)
        rho2 = np.sum(x * x, axis=-1)
        g = (2 * c_a / l_a**2) * np.exp(-rho2 / l_a**2) \
            - (2 * c_r / l_r**2) * np.exp(-rho2 / l_r**2)
        return g[..., None] * x

    def hess_u(x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        rho2 = float(np.sum(x * x))
        out = np.zeros((d, d))
        for c, ell, sign in ((c_a, l_a, -1.0), (c_r, l_r, 1.0)):
            e = math.exp(-rho2 / ell**2)
            out += sign * c * e * ((4.0 / ell**4) * np.outer(x, x)
                                   - (2.0 / ell**2) * np.eye(d))
        return out

    # Single-Gaussian bounds attained at the origin (Hessian) and at
    # rho = ell/sqrt(2) (gradient); the sum is bounded by the triangle
    # inequality, exact whenever one amplitude is zero.
    hess_bound = 2 * c_a / l_a**2 + 2 * c_r / l_r**2
    grad_bound = math.sqrt(2.0) * math.exp(-0.5) * (c_a / l_a + c_r / l_r)
    return u, grad_u, hess_u, hess_bound, grad_bound


def _cucker_smale_family(k, gamma):
    """h(x) = k / (1 + |x|^2)^gamma: the classical decreasing radial weight."""

    def h(x):
        x = np.asarray(x, dtype=float)
        rho2 = np.sum(x * x, axis=-1)
        return k / (1.0 + rho2) ** gamma

    def grad_h(x):
        x = np.asarray(x, dtype=float)
        rho2 = np.sum(x * x, axis=-1)
        g = -2.0 * gamma * k * (1.0 + rho2) ** (-(gamma + 1.0))
        return g[..., None] * x

    # |grad h| = 2 gamma k rho (1+rho^2)^(-gamma-1) peaks at rho^2 = 1/(2 gamma + 1).
    rho_star = 1.0 / math.sqrt(2.0 * gamma + 1.0)
    grad_bound = 2.0 * gamma * k * rho_star * (1.0 + rho_star**2) ** (-(gamma + 1.0))
    return h, grad_h, k, grad_bound


def builtin_kernels(name: str, params: dict | None = None) -> KernelSpec:
    """Construct one of the built-in kernel families.

    gaussian_attraction_repulsion: U only (h = 0), params C_A, l_A, C_R, l_R.
    cucker_smale_weight:           h only (U = 0), params K, gamma.
    constant_weight:               h = K (U = 0), params K.
    zero_potential:                U = 0, h = 0.
    """
    params = dict(params or {})
    if name == "zero_potential":
        return KernelSpec(
            name=name, params=params,
            potential=_zero_scalar, grad_potential=_zero_vector,
            hess_potential=lambda x: np.zeros((np.asarray(x).shape[-1],) * 2),
            align_weight=_zero_scalar, grad_align_weight=_zero_vector,
            norm_U_hess=0.0, norm_grad_U=0.0, norm_h=0.0, norm_grad_h=0.0,
        )
    if name == "constant_weight":
        k = float(params.get("K", 1.0))
        if k <= 0:
            raise BadKernelParams(f"constant_weight needs K > 0, got {k}")
        return KernelSpec(
            name=name, params={"K": k},
            potential=_zero_scalar, grad_potential=_zero_vector,
            hess_potential=lambda x: np.zeros((np.asarray(x).shape[-1],) * 2),
            align_weight=lambda x: np.full(np.asarray(x).shape[:-1], k),
            grad_align_weight=_zero_vector,
            norm_U_hess=0.0, norm_grad_U=0.0, norm_h=k, norm_grad_h=0.0,
        )
    if name == "cucker_smale_weight":
        k = float(params.get("K", 1.0))
        gamma = float(params.get("gamma", 1.0))
        if k <= 0 or gamma <= 0:
            raise BadKernelParams(f"cucker_smale_weight needs K, gamma > 0, got {k}, {gamma}")
        h, grad_h, norm_h, norm_grad_h = _cucker_smale_family(k, gamma)
        return KernelSpec(
            name=name, params={"K": k, "gamma": gamma},
            potential=_zero_scalar, grad_potential=_zero_vector,
            hess_potential=lambda x: np.zeros((np.asarray(x).shape[-1],) * 2),
            align_weight=h, grad_align_weight=grad_h,
            norm_U_hess=0.0, norm_grad_U=0.0, norm_h=norm_h, norm_grad_h=norm_grad_h,
        )
    if name == "gaussian_attraction_repulsion":
        c_a = float(params.get("C_A", 1.0))
        l_a = float(params.get("l_A", 1.0))
        c_r = float(params.get("C_R", 0.0))
        l_r = float(params.get("l_R", 0.5))
        if l_a <= 0 or l_r <= 0:
            raise BadKernelParams(f"gaussian scales must be positive, got l_A={l_a}, l_R={l_r}")
        if c_a < 0 or c_r < 0:
            raise BadKernelParams("gaussian amplitudes C_A, C_R must be nonnegative")
        u, grad_u, hess_u, hess_bound, grad_bound = _gaussian_family(c_a, l_a, c_r, l_r)
        return KernelSpec(
            name=name, params={"C_A": c_a, "l_A": l_a, "C_R": c_r, "l_R": l_r},
            potential=u, grad_potential=grad_u, hess_potential=hess_u,
            align_weight=_zero_scalar, grad_align_weight=_zero_vector,
            norm_U_hess=hess_bound, norm_grad_U=grad_bound,
            norm_h=0.0, norm_grad_h=0.0,
        )
    raise BadKernelParams(f"unknown kernel family {name!r}")


def compose_kernels(potential_spec: KernelSpec, weight_spec: KernelSpec) -> KernelSpec:
    """Merge a potential-only spec with a weight-only spec into one interaction."""
    if potential_spec.norm_h != 0.0 or weight_spec.norm_grad_U != 0.0:
        raise BadKernelParams("compose expects (potential-only, weight-only)")
    return KernelSpec(
        name=f"{potential_spec.name}+{weight_spec.name}",
        params={"potential": potential_spec.params, "weight": weight_spec.params},
        potential=potential_spec.potential,
        grad_potential=potential_spec.grad_potential,
        hess_potential=potential_spec.hess_potential,
        align_weight=weight_spec.align_weight,
        grad_align_weight=weight_spec.grad_align_weight,
        norm_U_hess=potential_spec.norm_U_hess,
        norm_grad_U=potential_spec.norm_grad_U,
        norm_h=weight_spec.norm_h,
        norm_grad_h=weight_spec.norm_grad_h,
    )


def validate_kernel(spec: KernelSpec, n_samples: int = 256, box: float = 5.0,
                    seed: int = 0) -> None:
    """Sampled sanity checks: h >= 0 and h even (h(x) = h(-x)).

    Evenness is what lets the pairwise alignment sum conserve momentum, so it
    is enforced rather than assumed.
    """
    rng = np.random.default_rng(seed)
    for d in (2, 3):
        pts = rng.uniform(-box, box, size=(n_samples, d))
        hx = np.asarray(spec.align_weight(pts))
        if np.any(hx < 0):
            raise BadKernelParams(f"{spec.name}: alignment weight is negative somewhere")
        if not np.allclose(hx, spec.align_weight(-pts), rtol=1e-12, atol=1e-14):
            raise BadKernelParams(f"{spec.name}: alignment weight is not even")


def acceleration(ens, spec: KernelSpec) -> FieldSample:
    """Mean-field acceleration of every particle against the full ensemble.

    Works on PhaseEnsemble and SphereEnsemble alike. The reduction uses
    np.sum with a fixed per-row summation order, so results are bit-identical
    regardless of worker count.
    """
    a = acceleration_arrays(ens.x, velocities(ens), ens.w, spec)
    sup = float(np.max(np.sqrt(np.sum(a * a, axis=1)))) if a.size else 0.0
    return FieldSample(a=a, sup_norm=sup)


def acceleration_arrays(x, v, w, spec: KernelSpec) -> np.ndarray:
    """Array-level pairwise field; used by the integrator substeps."""
    n, d = x.shape
    if spec.is_zero():
        return np.zeros((n, d))
    a = np.empty((n, d))
    has_pot = spec.norm_grad_U > 0.0
    has_align = spec.norm_h > 0.0
    for i0 in range(0, n, _CHUNK):
        i1 = min(i0 + _CHUNK, n)
        dx = x[i0:i1, None, :] - x[None, :, :]          # (b, n, d)
        block = np.zeros((i1 - i0, d))
        if has_pot:
            g = spec.grad_potential(dx)                  # (b, n, d)
            block -= np.sum(w[None, :, None] * g, axis=1)
        if has_align:
            hw = spec.align_weight(dx) * w[None, :]      # (b, n)
            block += np.sum(hw[:, :, None] * v[None, :, :], axis=1)
            block -= np.sum(hw, axis=1)[:, None] * v[i0:i1]
        a[i0:i1] = block
    return a


def interaction_energy(ens, spec: KernelSpec) -> float:
    """Potential part of the total energy: (1/2) sum_ij w_i w_j U(x_i - x_j),
    diagonal included (the empirical convolution keeps the self-pair)."""
    if spec.potential is _zero_scalar:
        return 0.0
    x, w = ens.x, ens.w
    total = 0.0
    for i0 in range(0, x.shape[0], _CHUNK):
        i1 = min(i0 + _CHUNK, x.shape[0])
        dx = x[i0:i1, None, :] - x[None, :, :]
        uvals = spec.potential(dx)
        total += float(np.sum(w[i0:i1, None] * w[None, :] * uvals))
    return 0.5 * total


def field_gap_bound(spec: KernelSpec, R: float) -> float:
    """Lipschitz constant tying the field gap of two measures to their W1 gap:
    ||a_f - a_g||_inf <= field_gap_bound(spec, R) * W1(f, g) whenever both
    measures live in velocities of norm at most R."""
    if not R > 0:
        raise ValidationError(f"speed-support radius must be positive, got {R}")
    return spec.norm_U_hess + math.sqrt(spec.norm_h**2 + 4.0 * R**2 * spec.norm_grad_h**2)
