"""Exact Wasserstein-1 between weighted particle ensembles, plus the
convergence and equicontinuity experiment harness built on top of it.

Ground metric: Euclidean norm on the concatenated (x, v) state, the product
norm under which the field-gap estimate of `kernels.field_gap_bound` is
stated. Equal-count uniform-weight pairs are solved as a min-cost assignment
(shortest augmenting path); general weights go through an exact transport LP.
No entropic regularization anywhere: acceptance tests need exact optima.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix
from scipy.spatial.distance import cdist

from .core import ModelParams, config_hash, project_measure, velocities
from .errors import (
    DimensionMismatch,
    MissingSnapshot,
    TooLarge,
    ValidationError,
)
from .eps_dynamics import EpsRunConfig, simulate
from .kernels import acceleration
from .relaxation import solve_roots
from .sphere_dynamics import SphereRunConfig, simulate_limit

EXACT_CAP = 2048  # combined particle budget for the exact solvers


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SWARM_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class W1Report:
    value: float
    plan: tuple          # (i, j, mass) triples
    solver: str          # "assignment" | "lp"
    iterations: int
    residual: float      # worst marginal violation of the plan


def _points(ens) -> np.ndarray:
    return np.hstack([ens.x, velocities(ens)])


def w1_exact(mu, nu) -> W1Report:
    """Exact W1 distance with an optimal plan."""
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"phase dimensions differ: {mu.dim} vs {nu.dim}")
    if mu.n + nu.n > EXACT_CAP:
        raise TooLarge(
            f"{mu.n}+{nu.n} particles exceed the exact cap {EXACT_CAP}; "
            "subsample (w1_subsampled) instead"
        )
    cost = cdist(_points(mu), _points(nu))
    uniform = (
        mu.n == nu.n
        and np.all(mu.w == mu.w[0])
        and np.all(nu.w == nu.w[0])
    )
    if uniform:
        rows, cols = linear_sum_assignment(cost)
        mass = 1.0 / mu.n
        plan = tuple((int(i), int(j), mass) for i, j in zip(rows, cols))
        value = float(np.sum(cost[rows, cols]) * mass)
        return W1Report(value=value, plan=plan, solver="assignment",
                        iterations=mu.n, residual=0.0)
    return _w1_lp(cost, mu.w, nu.w)


def _w1_lp(cost, w_mu, w_nu) -> W1Report:
    n, m = cost.shape
    # Row-sum and column-sum equality constraints on the n*m plan variables.
    idx = np.arange(n * m)
    row_of = idx // m
    col_of = idx % m
    rows = np.concatenate([row_of, n + col_of])
    cols = np.concatenate([idx, idx])
    data = np.ones(2 * n * m)
    a_eq = coo_matrix((data, (rows, cols)), shape=(n + m, n * m)).tocsr()
    b_eq = np.concatenate([w_mu, w_nu])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None),
                  method="highs")
    if not res.success:
        raise ValidationError(f"transport LP failed: {res.message}")
    pi = res.x.reshape(n, m)
    marg_err = max(
        float(np.max(np.abs(pi.sum(axis=1) - w_mu))),
        float(np.max(np.abs(pi.sum(axis=0) - w_nu))),
    )
    nz = np.argwhere(pi > 1e-15)
    plan = tuple((int(i), int(j), float(pi[i, j])) for i, j in nz)
    value = float(np.sum(pi * cost))
    return W1Report(value=value, plan=plan, solver="lp",
                    iterations=int(getattr(res, "nit", 0)), residual=marg_err)


def w1_subsampled(mu, nu, n_sub: int = 512, n_rep: int = 8, seed: int = 0):
    """Monte-Carlo W1 estimate for ensembles above the exact cap.

    Draws i.i.d. atoms from each measure (by weight) and averages the exact
    distance of the subsampled uniform clouds. Returns (estimate, stderr);
    this is an estimate, not a certified distance.
    """
    rng = np.random.default_rng(seed)
    p_mu, p_nu = _points(mu), _points(nu)
    vals = []
    for _ in range(n_rep):
        i = rng.choice(mu.n, size=n_sub, replace=True, p=mu.w)
        j = rng.choice(nu.n, size=n_sub, replace=True, p=nu.w)
        cost = cdist(p_mu[i], p_nu[j])
        rows, cols = linear_sum_assignment(cost)
        vals.append(float(np.sum(cost[rows, cols]) / n_sub))
    vals = np.asarray(vals)
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n_rep)) if n_rep > 1 else float("inf")
    return float(np.mean(vals)), stderr


@dataclass(frozen=True)
class ConvergenceTable:
    """Rows of (eps, t, w1, runtime_ms) plus run provenance."""

    rows: tuple
    metadata: dict

    def __post_init__(self):
        by_t = {}
        for row in self.rows:
            by_t.setdefault(row["t"], []).append(row["eps"])
        for t, eps_seq in by_t.items():
            if any(b >= a for a, b in zip(eps_seq, eps_seq[1:])):
                raise ValidationError(f"eps not strictly decreasing at t={t}")

    def w1(self, eps, t):
        for row in self.rows:
            if row["eps"] == eps and row["t"] == t:
                return row["w1"]
        raise MissingSnapshot(f"no table row for eps={eps}, t={t}")


def convergence_study(f_in, eps_list, t_grid, cfg: EpsRunConfig) -> ConvergenceTable:
    """Run the stiff system at each eps and the sphere limit once, all from
    the same initial atoms (the limit starts from the projected measure), and
    tabulate W1 between matching snapshots."""
    eps_list = list(eps_list)
    t_grid = sorted(t_grid)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValidationError("eps_list must be strictly decreasing")
    if cfg.diffusion:
        raise ValidationError("convergence study compares the deterministic dynamics")
    horizon = max(max(t_grid), cfg.dt)
    base = replace(cfg, T=horizon)
    lim_cfg = SphereRunConfig(
        params=base.params, spec=base.spec, dt=base.dt, T=horizon,
        snapshot_stride=base.snapshot_stride, diffusion=False,
        rng_seed=base.rng_seed,
    )
    lim_traj = simulate_limit(project_measure(f_in, base.params.r), lim_cfg)
    eps_trajs = {}
    for eps in eps_list:
        params = ModelParams(alpha=base.params.alpha, beta=base.params.beta, eps=eps)
        eps_trajs[eps] = simulate(f_in, replace(base, params=params))

    tasks = [(eps, t) for eps in eps_list for t in t_grid]

    def solve(pair):
        eps, t = pair
        tic = time.perf_counter()
        rep = w1_exact(eps_trajs[eps].snapshot_at(t), lim_traj.snapshot_at(t))
        ms = 1000.0 * (time.perf_counter() - tic)
        return {"eps": eps, "t": t, "w1": rep.value, "runtime_ms": ms}

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = tuple(pool.map(solve, tasks))
    else:
        rows = tuple(solve(p) for p in tasks)
    meta = {
        "n": f_in.n,
        "seed": cfg.rng_seed,
        "config_hash": config_hash({
            "alpha": base.params.alpha, "beta": base.params.beta,
            "dt": base.dt, "T": horizon, "scheme": base.scheme,
            "kernel": base.spec.name, "kernel_params": base.spec.params,
            "eps_list": eps_list, "t_grid": t_grid,
        }),
    }
    return ConvergenceTable(rows=rows, metadata=meta)


@dataclass(frozen=True)
class EquicontinuityReport:
    max_ratio: float
    bound_constant: float
    worst_pair: tuple
    n_pairs: int


def equicontinuity_probe(trajectory, t_pairs) -> EquicontinuityReport:
    """Empirical Lipschitz ratio sup W1(f(t), f(s)) / |t - s| over the given
    pairs, reported against the constant assembled from the measured field
    amplitude: A + beta (r + R0) R0 max((rho3 - r)/eps, (r - rho2)/eps) + R0."""
    ratios = []
    pairs = list(t_pairs)
    for (t, s) in pairs:
        if t == s:
            raise ValidationError("equicontinuity ratio needs t != s")
        rep = w1_exact(trajectory.snapshot_at(t), trajectory.snapshot_at(s))
        ratios.append(rep.value / abs(t - s))
    k = int(np.argmax(ratios))
    cfg = trajectory.cfg
    p = cfg.params
    a_meas = max(acceleration(s, cfg.spec).sup_norm for s in trajectory.snapshots)
    r0_meas = max(rep.speed_max for rep in trajectory.moment_reports)
    low = solve_roots(p.eps, -a_meas, p) if a_meas > 0 else None
    high = solve_roots(p.eps, a_meas, p) if a_meas > 0 else None
    if a_meas == 0.0:
        band = 0.0
    elif low is not None and low.validity and high.rho3 is not None:
        band = max((high.rho3 - p.r) / p.eps, (p.r - low.rho2) / p.eps)
    else:
        band = math.inf
    const = a_meas + p.beta * (p.r + r0_meas) * r0_meas * band + r0_meas
    return EquicontinuityReport(max_ratio=float(max(ratios)), bound_constant=const,
                                worst_pair=pairs[k], n_pairs=len(pairs))
