"""Small constrained local optimiser for pose and gripper problems.

Quadratic-penalty continuation with a Levenberg-Marquardt inner loop over a
6-parameter chart (position offset + rotation vector applied on the left of
the current orientation).  Objectives are given as residual vectors whose
squared norm is minimised; equality residuals must vanish and inequality
residuals must be non-negative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .contact import GripperConfig
from .errors import Infeasible
from .geometry import Pose, quat_from_rotvec, quat_mul, quat_to_matrix, quat_to_rotvec

Residual = Callable[[object], "np.ndarray | float | Sequence[float]"]

_EMPTY = np.zeros(0)


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    max_outer: int = 8
    max_inner: int = 400
    multistart: int = 8
    growth: float = 10.0
    initial_penalty: float = 1e4
    infeasible_threshold: float = 1e-4
    seed: int = 0
    position_perturbation: float = 0.02
    yaw_perturbation: float = math.radians(10.0)


@dataclass
class ConstraintSystem:
    equalities: list = field(default_factory=list)
    inequalities: list = field(default_factory=list)

    def evaluate(self, var) -> tuple[np.ndarray, np.ndarray]:
        eq = np.concatenate([np.atleast_1d(np.asarray(f(var), dtype=float)) for f in self.equalities]) \
            if self.equalities else _EMPTY
        ineq = np.concatenate([np.atleast_1d(np.asarray(f(var), dtype=float)) for f in self.inequalities]) \
            if self.inequalities else _EMPTY
        return eq, ineq

    def violation(self, var) -> float:
        eq, ineq = self.evaluate(var)
        v = 0.0
        if eq.size:
            v = max(v, float(np.abs(eq).max()))
        if ineq.size:
            v = max(v, float(-ineq.min()))
        return v

    def __bool__(self):
        return bool(self.equalities or self.inequalities)


def _pose_fast(p: np.ndarray, q: np.ndarray) -> Pose:
    pose = object.__new__(Pose)
    p = p.copy()
    p.setflags(write=False)
    q = q / math.sqrt(float(q @ q))
    if q[0] < 0:
        q = -q
    q.setflags(write=False)
    object.__setattr__(pose, "position", p)
    object.__setattr__(pose, "quaternion", q)
    r = quat_to_matrix(q)
    r.setflags(write=False)
    pose.__dict__["rotation"] = r
    return pose


def _chart(base: Pose, v: np.ndarray) -> Pose:
    return _pose_fast(base.position + v[:3], quat_mul(quat_from_rotvec(v[3:]), base.quaternion))


@dataclass
class _Problem:
    objective: Callable | None
    cs: ConstraintSystem
    to_var: Callable[[Pose], object]

    def parts(self, pose: Pose):
        var = self.to_var(pose)
        o = _EMPTY if self.objective is None else np.atleast_1d(np.asarray(self.objective(var), dtype=float))
        eq, ineq = self.cs.evaluate(var)
        return o, eq, ineq

    def penalty_residual(self, pose: Pose, mu: float) -> np.ndarray:
        o, eq, ineq = self.parts(pose)
        s = math.sqrt(mu)
        return np.concatenate([o, s * eq, s * np.minimum(ineq, 0.0)])

    def violation(self, pose: Pose) -> float:
        return self.cs.violation(self.to_var(pose))

    def objective_value(self, pose: Pose) -> float:
        if self.objective is None:
            return 0.0
        o = np.atleast_1d(np.asarray(self.objective(self.to_var(pose)), dtype=float))
        return float(o @ o)


def _jacobian(fun, base: Pose, r0: np.ndarray, h: float = 1e-7) -> np.ndarray:
    jac = np.empty((r0.size, 6))
    v = np.zeros(6)
    for k in range(6):
        v[k] = h
        jac[:, k] = (fun(_chart(base, v)) - r0) / h
        v[k] = 0.0
    return jac


def _levenberg_marquardt(fun, base: Pose, max_iter: int) -> Pose:
    r = fun(base)
    cost = float(r @ r)
    lam = 1e-3
    for _ in range(max_iter):
        if cost < 1e-30:
            break
        jac = _jacobian(fun, base, r)
        jtj = jac.T @ jac
        g = jac.T @ r
        if float(np.abs(g).max()) < 1e-14:
            break
        improved = False
        rel, step = 1.0, np.ones(6)
        for _ in range(12):
            a = jtj + lam * (np.diag(np.diag(jtj)) + 1e-12 * np.eye(6))
            try:
                step = -np.linalg.solve(a, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = _chart(base, step)
            rc = fun(cand)
            cc = float(rc @ rc)
            if cc < cost:
                base, r = cand, rc
                rel = (cost - cc) / max(cost, 1e-300)
                cost = cc
                lam = max(lam / 3.0, 1e-12)
                improved = True
                break
            lam *= 4.0
        if not improved or float(np.linalg.norm(step)) < 1e-14 or rel < 1e-14:
            break
    return base


def _polish(problem: _Problem, pose: Pose, tol: float, iters: int = 20) -> Pose:
    """Gauss-Newton steps restricted to the linearised active constraints.

    Each step is the minimum-norm correction onto the active set plus the
    objective-decreasing move inside its null space, so penalty bias left
    over from the continuation phase is removed.
    """

    def active(p: Pose, mask=None):
        o, eq, ineq = problem.parts(p)
        if mask is None:
            mask = ineq < tol
        return o, np.concatenate([eq, ineq[mask]]), mask

    def key(p: Pose):
        # violation first (down to a floor well below tol), then objective
        return (max(problem.violation(p), 1e-11), problem.objective_value(p))

    cur = pose
    best_key = key(pose)
    best = pose
    for _ in range(iters):
        o, c, mask = active(cur)
        if c.size:
            jc = _jacobian(lambda p: active(p, mask)[1], cur, c)
            dx, *_ = np.linalg.lstsq(jc, -c, rcond=None)
            _, sv, vt = np.linalg.svd(jc)
            rank = int(np.sum(sv > 1e-9 * max(float(sv[0]), 1e-300))) if sv.size else 0
            null = vt[rank:].T
        else:
            dx, null = np.zeros(6), np.eye(6)
        if o.size and null.shape[1]:
            jo = _jacobian(lambda p: active(p, mask)[0], cur, o)
            z, *_ = np.linalg.lstsq(jo @ null, -(o + jo @ dx), rcond=None)
            dx = dx + null @ z
        cur = _chart(cur, dx)
        k = key(cur)
        if k < best_key:
            best, best_key = cur, k
        if float(np.linalg.norm(dx)) < 1e-12:
            break
    return best


def _solve_from(problem: _Problem, start: Pose, cfg: SolverConfig) -> Pose:
    mu = cfg.initial_penalty
    pose = start
    for _ in range(cfg.max_outer):
        pose = _levenberg_marquardt(lambda p: problem.penalty_residual(p, mu), pose, cfg.max_inner)
        # coarse feasibility is enough; the polish removes the remaining bias
        if problem.violation(pose) <= cfg.infeasible_threshold:
            break
        mu *= cfg.growth
    return _polish(problem, pose, cfg.tol)


def _perturbed_starts(guess: Pose, cfg: SolverConfig) -> list[Pose]:
    rng = np.random.default_rng(cfg.seed)
    starts = []
    for _ in range(max(cfg.multistart - 1, 0)):
        dp = rng.uniform(-cfg.position_perturbation, cfg.position_perturbation, size=3)
        dyaw = rng.uniform(-cfg.yaw_perturbation, cfg.yaw_perturbation)
        starts.append(_chart(guess, np.array([dp[0], dp[1], dp[2], 0.0, 0.0, dyaw])))
    return starts


def _run(problem: _Problem, guess: Pose, cfg: SolverConfig, extra_starts, rank) -> Pose:
    seeded = [guess, *extra_starts]
    starts = seeded + _perturbed_starts(guess, cfg)
    best_key, best, best_viol = None, None, math.inf
    for i, s in enumerate(starts):
        if i == len(seeded) and extra_starts and best is not None:
            # analytic seeds cover the basins; random restarts are a fallback
            break
        sol = _solve_from(problem, s, cfg)
        viol = problem.violation(sol)
        best_viol = min(best_viol, viol)
        if viol > cfg.tol:
            continue
        key = rank(sol)
        if best_key is None or key < best_key:
            best_key, best = key, sol
    if best is None and best_viol <= cfg.infeasible_threshold:
        # close but not converged: spend more polishing on the nearest start
        for s in starts:
            sol = _polish(problem, _solve_from(problem, s, cfg), cfg.tol, iters=80)
            if problem.violation(sol) <= cfg.tol:
                best = sol
                break
    if best is None:
        raise Infeasible(f"no start converged (best max residual {best_viol:.3g})")
    return best


def solve_pose(objective, cs: ConstraintSystem, guess: Pose, cfg: SolverConfig = SolverConfig(),
               extra_starts: Sequence[Pose] = ()) -> Pose:
    """Minimise ``|objective(pose)|^2`` subject to ``cs`` from several starts.

    ``extra_starts`` lets callers add analytic seeds (e.g. projections); they
    are tried after the guess, and the random perturbations only run when
    none of them converged.
    """
    problem = _Problem(objective, cs, lambda p: p)
    if problem.violation(guess) <= cfg.tol and problem.objective_value(guess) <= 1e-24:
        return guess

    def rank(p: Pose):
        return (problem.objective_value(p), *p.position.tolist())

    return _run(problem, guess, cfg, extra_starts, rank)


def solve_feasible(cs: ConstraintSystem, seed: GripperConfig, cfg: SolverConfig = SolverConfig()) -> GripperConfig:
    """Find a gripper pose satisfying ``cs`` (constant objective).

    Among converged starts the one closest to the seed wins, so a feasible
    seed comes back unchanged.
    """
    if not cs or cs.violation(seed) <= cfg.tol:
        return seed
    opening = seed.opening

    def to_var(p: Pose) -> GripperConfig:
        return GripperConfig(p, opening)

    problem = _Problem(None, cs, to_var)

    def rank(p: Pose):
        d = float(np.linalg.norm(p.position - seed.pose.position))
        return (d, *p.position.tolist())

    return to_var(_run(problem, seed.pose, cfg, (), rank))


def position_objective(target: Pose, orientation_weight: float = 0.1) -> Callable[[Pose], np.ndarray]:
    """Residuals for ``|p - p_target|^2 + w * angle(R, R_target)^2``."""
    sw = math.sqrt(orientation_weight)
    qt_conj = np.array([target.quaternion[0], *(-target.quaternion[1:])])

    def f(p: Pose) -> np.ndarray:
        rel = quat_mul(qt_conj, p.quaternion)
        return np.concatenate([p.position - target.position, sw * quat_to_rotvec(rel)])

    return f


__all__ = [
    "ConstraintSystem",
    "SolverConfig",
    "position_objective",
    "solve_feasible",
    "solve_pose",
]
