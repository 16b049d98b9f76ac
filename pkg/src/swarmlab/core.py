"""Domain types, ensemble bookkeeping, and the sphere-projection operator.

Ensembles are immutable weighted particle clouds: the discrete stand-in for a
probability measure on phase space (x, v) or on the speed sphere (x, omega).
All operations are pure functions of their inputs; arrays inside ensembles are
marked read-only so snapshots can be shared freely across threads.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import BadBand, DimensionMismatch, ValidationError, ZeroVelocityParticle

MASS_TOL = 1e-12          # |sum(w) - 1| allowed at construction
SPHERE_RADIUS_TOL = 1e-12  # relative deviation of |omega| from r


def _frozen_array(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ModelParams:
    """Propulsion/friction coefficients and the equilibrium speed r = sqrt(alpha/beta).

    alpha: self-propulsion rate (1/time), beta: friction (1/(time*speed^2)),
    eps: scale separation between the speed relaxation and the slow transport.
    """

    alpha: float
    beta: float
    eps: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.eps > 0):
            raise ValidationError(
                f"alpha, beta, eps must be positive, got "
                f"({self.alpha}, {self.beta}, {self.eps})"
            )

    @property
    def r(self) -> float:
        return math.sqrt(self.alpha / self.beta)


@dataclass(frozen=True)
class PhaseEnsemble:
    """N weighted particles (x_i, v_i, w_i) in R^d x R^d, d in {2, 3}.

    Weights are nonnegative and sum to 1. Particles with exactly zero velocity
    are rejected: the zero-speed equilibrium is unstable and every analytical
    statement the lab verifies assumes initial support away from it.
    """

    x: np.ndarray   # (n, d) positions
    v: np.ndarray   # (n, d) velocities
    w: np.ndarray   # (n,) weights
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen_array(self.x))
        object.__setattr__(self, "v", _frozen_array(self.v))
        object.__setattr__(self, "w", _frozen_array(self.w))
        _validate_cloud(self.x, self.v, self.w)
        if np.any(np.all(self.v == 0.0, axis=1)):
            raise ZeroVelocityParticle("ensemble contains a particle with v = 0")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def speeds(self) -> np.ndarray:
        return np.sqrt(np.sum(self.v * self.v, axis=1))

    @classmethod
    def uniform_weights(cls, x, v, time=0.0) -> "PhaseEnsemble":
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        return cls(x=x, v=v, w=np.full(n, 1.0 / n), time=time)


@dataclass(frozen=True)
class SphereEnsemble:
    """N weighted particles (x_i, omega_i, w_i) with |omega_i| = r."""

    x: np.ndarray       # (n, d)
    omega: np.ndarray   # (n, d), |omega_i| = r
    w: np.ndarray       # (n,)
    r: float
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen_array(self.x))
        object.__setattr__(self, "omega", _frozen_array(self.omega))
        object.__setattr__(self, "w", _frozen_array(self.w))
        _validate_cloud(self.x, self.omega, self.w)
        if not self.r > 0:
            raise ValidationError(f"sphere radius must be positive, got {self.r}")
        speeds = np.sqrt(np.sum(self.omega * self.omega, axis=1))
        off = np.max(np.abs(speeds - self.r)) if speeds.size else 0.0
        if off > SPHERE_RADIUS_TOL * self.r:
            raise ValidationError(
                f"velocities stray from the radius-{self.r} sphere by {off:.3e}"
            )

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def speeds(self) -> np.ndarray:
        return np.sqrt(np.sum(self.omega * self.omega, axis=1))


def _validate_cloud(x, vel, w):
    if x.ndim != 2 or x.shape[1] not in (2, 3):
        raise ValidationError(f"positions must be (n, d) with d in {{2, 3}}, got {x.shape}")
    if vel.shape != x.shape:
        raise DimensionMismatch(f"velocity shape {vel.shape} != position shape {x.shape}")
    if w.shape != (x.shape[0],):
        raise ValidationError(f"weights must be ({x.shape[0]},), got {w.shape}")
    if np.any(w < 0):
        raise ValidationError("weights must be nonnegative")
    if abs(float(np.sum(w)) - 1.0) > MASS_TOL:
        raise ValidationError(f"weights must sum to 1, got {float(np.sum(w))!r}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(vel))):
        raise ValidationError("non-finite particle coordinates")


def velocities(ens) -> np.ndarray:
    """Velocity array of either ensemble flavor."""
    return ens.v if isinstance(ens, PhaseEnsemble) else ens.omega


@dataclass(frozen=True)
class MomentReport:
    mass: float
    momentum: np.ndarray
    kinetic_energy: float   # sum_i w_i |v_i|^2
    speed_min: float
    speed_max: float
    pos_radius_max: float

    def __post_init__(self):
        object.__setattr__(self, "momentum", _frozen_array(self.momentum))


def project_measure(ens: PhaseEnsemble, r: float) -> SphereEnsemble:
    """Send every atom (x, v, w) to (x, r*v/|v|, w): the projected measure on the
    radius-r sphere. Positions and weights are untouched, so mass is preserved
    exactly and each velocity keeps its direction."""
    if not r > 0:
        raise ValidationError(f"projection radius must be positive, got {r}")
    speeds = ens.speeds()
    if np.any(speeds == 0.0):
        raise ZeroVelocityParticle("cannot project a particle with v = 0")
    omega = ens.v * (r / speeds)[:, None]
    return SphereEnsemble(x=ens.x, omega=omega, w=ens.w, r=r, time=ens.time)


def moments(ens) -> MomentReport:
    """Weighted moments and support diagnostics of an ensemble."""
    vel = velocities(ens)
    speeds = np.sqrt(np.sum(vel * vel, axis=1))
    pos_r = np.sqrt(np.sum(ens.x * ens.x, axis=1))
    return MomentReport(
        mass=float(np.sum(ens.w)),
        momentum=np.sum(ens.w[:, None] * vel, axis=0),
        kinetic_energy=float(np.sum(ens.w * speeds * speeds)),
        speed_min=float(np.min(speeds)),
        speed_max=float(np.max(speeds)),
        pos_radius_max=float(np.max(pos_r)),
    )


def support_in_band(ens, lo: float, hi: float) -> bool:
    """True iff every particle speed lies in [lo, hi]."""
    if lo > hi:
        raise BadBand(f"need lo <= hi, got [{lo}, {hi}]")
    speeds = np.sqrt(np.sum(velocities(ens) ** 2, axis=1))
    return bool(np.all(speeds >= lo) and np.all(speeds <= hi))


# ---------------------------------------------------------------------------
# Serialization: CSV (one row per particle) and JSON (with a header object).
# Floats are written with repr() so identical runs emit identical bytes and
# values round-trip exactly.
# ---------------------------------------------------------------------------

def _csv_columns(dim):
    return (
        ["id"]
        + [f"x{k + 1}" for k in range(dim)]
        + [f"v{k + 1}" for k in range(dim)]
        + ["w"]
    )


def ensemble_to_csv(ens) -> str:
    vel = velocities(ens)
    buf = io.StringIO()
    buf.write(",".join(_csv_columns(ens.dim)) + "\n")
    for i in range(ens.n):
        row = [str(i)]
        row += [repr(float(c)) for c in ens.x[i]]
        row += [repr(float(c)) for c in vel[i]]
        row.append(repr(float(ens.w[i])))
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def ensemble_from_csv(text: str, time: float = 0.0, r: float | None = None):
    """Parse the CSV particle table. Returns a SphereEnsemble when r is given,
    otherwise a PhaseEnsemble (CSV carries no header object). Columns are
    looked up by name, so extra diagnostic columns are tolerated."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split(",")
    dim = sum(1 for c in header if c.startswith("x") and c[1:].isdigit())
    if dim not in (2, 3):
        raise ValidationError(f"unexpected CSV columns: {header}")
    try:
        xi = [header.index(f"x{k + 1}") for k in range(dim)]
        vi = [header.index(f"v{k + 1}") for k in range(dim)]
        wi = header.index("w")
    except ValueError as exc:
        raise ValidationError(f"unexpected CSV columns: {header}") from exc
    rows = [ln.split(",") for ln in lines[1:]]
    x = np.array([[float(row[k]) for k in xi] for row in rows])
    v = np.array([[float(row[k]) for k in vi] for row in rows])
    w = np.array([float(row[wi]) for row in rows])
    if r is None:
        return PhaseEnsemble(x=x, v=v, w=w, time=time)
    return SphereEnsemble(x=x, omega=v, w=w, r=r, time=time)


def ensemble_to_json(ens) -> str:
    vel = velocities(ens)
    doc = {
        "header": {
            "dim": ens.dim,
            "time": ens.time,
            "r": ens.r if isinstance(ens, SphereEnsemble) else None,
        },
        "particles": [
            {
                "id": i,
                "x": [float(c) for c in ens.x[i]],
                "v": [float(c) for c in vel[i]],
                "w": float(ens.w[i]),
            }
            for i in range(ens.n)
        ],
    }
    return json.dumps(doc, indent=1)


def ensemble_from_json(text: str):
    doc = json.loads(text)
    head = doc["header"]
    parts = doc["particles"]
    x = np.array([p["x"] for p in parts], dtype=float)
    v = np.array([p["v"] for p in parts], dtype=float)
    w = np.array([p["w"] for p in parts], dtype=float)
    if head.get("r") is None:
        return PhaseEnsemble(x=x, v=v, w=w, time=head["time"])
    return SphereEnsemble(x=x, omega=v, w=w, r=head["r"], time=head["time"])


def config_hash(mapping) -> str:
    """Stable hash of a JSON-serializable mapping: invariant under key order."""
    blob = json.dumps(mapping, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
