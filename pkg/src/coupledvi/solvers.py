"""Candidate solvers for coupled systems, each finishing with a residual certificate.

``brute_force`` is the exhaustive grid oracle, ``extragradient`` works on the
first-order form when all oracles expose operators, ``uzawa_sp`` handles the
saddle-point case, and ``ball_expansion`` handles unbounded sets by solving
on growing balls until the solution sits strictly inside.
"""
from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kvtext
from . import sets as cs
from .probes import ProbeReport, probe_coercivity
from .system import (
    DEFAULT_SOLUTION_TOL,
    CoupledSystem,
    ResidualReport,
    TestSet,
    build_special,
    certify,
    residual,
    saddle_check,
)

log = logging.getLogger(__name__)

DIVERGENCE_WINDOW = 50
BRUTE_MAX_DIM = 4
BRUTE_BUDGET = 25_000_000
_SCREEN_PER_AXIS = {1: 17, 2: 9, 3: 5, 4: 3}


class UnsupportedError(ValueError):
    """The requested solver cannot handle this system."""


class ResourceError(RuntimeError):
    """The problem exceeds the configured computational budget."""


class DivergenceError(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


class NonCoerciveError(RuntimeError):
    """Ball expansion never found an interior solution."""

    def __init__(self, msg, probe: ProbeReport | None = None, outcome=None):
        super().__init__(msg)
        self.probe = probe
        self.outcome = outcome


@dataclass
class SolveOutcome:
    u: np.ndarray
    lam: np.ndarray
    report: ResidualReport
    iterations: int
    converged: bool
    tol: float
    solver: str
    radius_history: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def point(self):
        return self.u, self.lam

    def to_kv(self) -> str:
        pairs = [("solver", self.solver), ("converged", self.converged), ("tol", self.tol),
                 ("iterations", self.iterations), ("u", self.u), ("lambda", self.lam),
                 ("r1", self.report.r1), ("r2", self.report.r2),
                 ("max_violation", self.report.max_violation),
                 ("test_set_size", self.report.test_set_size), ("test_seed", self.report.seed),
                 ("test_radius", self.report.radius)]
        if self.radius_history:
            pairs.append(("radius_history", np.array(self.radius_history)))
        pairs += [(k, v) for k, v in self.info.items()]
        return kvtext.dumps(pairs)


# -- brute force -------------------------------------------------------------

def _grid(S: cs.ConvexSet, resolution: int, box):
    if S.is_bounded:
        lo, hi = S.bounding_box()
    elif box is None:
        raise UnsupportedError(f"brute force needs bounded sets (got {S.variant}); pass box=")
    else:
        lo, hi = box
    axes = [np.unique(np.linspace(a, b, resolution)) for a, b in zip(lo, hi)]
    idx = np.array(list(itertools.product(*[range(len(a)) for a in axes])), dtype=int)
    pts = np.column_stack([axes[k][idx[:, k]] for k in range(S.dim)])
    keep = np.asarray(S.contains(pts), dtype=bool)
    if not keep.any():
        raise UnsupportedError("grid contains no feasible point; raise the resolution")
    steps = [float(a[1] - a[0]) if len(a) > 1 else 0.0 for a in axes]
    return pts[keep], idx[keep], axes, max(steps)


def _screen_subset(idx, axes):
    """Rows whose per-axis index lies on a coarse sub-grid (ends included)."""
    k = _SCREEN_PER_AXIS[len(axes)]
    marks = [np.unique(np.round(np.linspace(0, len(a) - 1, k)).astype(int)) for a in axes]
    keep = np.all([np.isin(idx[:, j], marks[j]) for j in range(len(axes))], axis=0)
    return np.flatnonzero(keep)


def brute_force(sys: CoupledSystem, resolution: int = 201, box=None, tol: float = DEFAULT_SOLUTION_TOL,
                budget: int = BRUTE_BUDGET, chunk: int = 512) -> SolveOutcome:
    """Exhaustive grid search for the candidate with the smallest residual.

    Every feasible grid point of K x Lambda is a candidate, and the full grids
    of K and Lambda are its test set.  The search is exact: a lower bound from
    a coarse sub-grid of test points orders and prunes candidates, and only
    candidates whose bound does not exceed the incumbent are scored in full.
    Ties go to the smallest (u-index, lambda-index).

    ``box`` = ((lo_u, hi_u), (lo_lam, hi_lam)) confines unbounded sets.
    """
    if sys.n + sys.m > BRUTE_MAX_DIM:
        raise UnsupportedError(f"brute force is limited to n + m <= {BRUTE_MAX_DIM}")
    box_u = box_l = None
    if box is not None:
        (lu, hu), (ll, hl) = box
        box_u = (np.broadcast_to(np.asarray(lu, float), (sys.n,)), np.broadcast_to(np.asarray(hu, float), (sys.n,)))
        box_l = (np.broadcast_to(np.asarray(ll, float), (sys.m,)), np.broadcast_to(np.asarray(hl, float), (sys.m,)))
    U, idx_u, axes_u, step_u = _grid(sys.K, resolution, box_u)
    L, idx_l, axes_l, step_l = _grid(sys.Lambda, resolution, box_l)
    nu, nl = len(U), len(L)
    if nu * nl > budget:
        raise ResourceError(f"{nu * nl} candidates exceed the budget of {budget}")
    f, g, B, chi, psi = sys.f, sys.g, sys.B, sys.chi, sys.psi

    # test points range over the candidate grids, so with Q[u, lam] = B(u, lam)
    # t1[u, lam, v] = (P[u, v] + Q[u, lam]) - Q[v, lam]
    # t2[u, lam, mu] = (W[lam, mu] + Q[u, mu]) - Q[u, lam]
    def P(ui, V):
        Ud = U[ui][:, None, :]
        D = V[None, :, :] - Ud
        return D @ f - chi(Ud, D)

    def Wf(li, M):
        Ld = L[li][:, None, :]
        D = M[None, :, :] - Ld
        return D @ g - psi(Ld, D)

    Q = np.asarray(B(U[:, None, :], L[None, :, :]), dtype=float)
    sv = _screen_subset(idx_u, axes_u)
    sm = _screen_subset(idx_l, axes_l)
    Ps = P(np.arange(nu), U[sv])                      # (nu, sv)
    Ws = Wf(np.arange(nl), L[sm])                     # (nl, sm)
    lb = np.full((nu, nl), -np.inf)
    for k in range(len(sv)):
        np.maximum(lb, (Ps[:, k][:, None] + Q) - Q[sv[k]][None, :], out=lb)
    for k in range(len(sm)):
        np.maximum(lb, (Ws[:, k][None, :] + Q[:, sm[k]][:, None]) - Q, out=lb)
    lb = lb.ravel()
    order = np.lexsort((np.arange(lb.size), lb))

    best, best_flat, scored = np.inf, -1, 0
    for start in range(0, order.size, chunk):
        block = order[start:start + chunk]
        if lb[block[0]] > best + 1e-9 * (1.0 + abs(best)):
            break
        ui, li = np.divmod(block, nl)
        t1 = (P(ui, U) + Q[ui, li][:, None]) - Q[:, li].T
        t2 = (Wf(li, L) + Q[ui]) - Q[ui, li][:, None]
        score = np.maximum(t1.max(axis=1), t2.max(axis=1))
        scored += block.size
        for s, flat in zip(score, block):
            if s < best or (s == best and flat < best_flat):
                best, best_flat = float(s), int(flat)
    ui, li = divmod(best_flat, nl)
    u, lam = U[ui].copy(), L[li].copy()
    report = residual(sys, u, lam, TestSet(U, L))
    info = {"grid_step": max(step_u, step_l), "candidates": nu * nl, "scored_exactly": scored,
            "resolution": resolution}
    return SolveOutcome(u, lam, report, 0, report.max_violation <= tol, tol, "brute", info=info)


# -- extragradient -----------------------------------------------------------

def _lipschitz_estimate(sys: CoupledSystem, z0, radius: float, seed: int, pairs: int = 24) -> float:
    """Largest finite-difference slope of T among random pairs near z0."""
    rng = np.random.default_rng(seed)
    n = sys.n
    best = 0.0
    for _ in range(pairs):
        a = z0 + radius * rng.standard_normal(z0.size) / np.sqrt(z0.size)
        b = a + 1e-4 * radius * rng.standard_normal(z0.size)
        ta = np.concatenate(sys.operator(a[:n], a[n:]))
        tb = np.concatenate(sys.operator(b[:n], b[n:]))
        best = max(best, np.linalg.norm(ta - tb) / np.linalg.norm(a - b))
    return best


def extragradient(sys: CoupledSystem, rho: float | None = None, max_iters: int = 100_000, tol: float = 1e-12,
                  cert_tol: float = DEFAULT_SOLUTION_TOL, start=None, seed: int = 0, trace: bool = False,
                  test_count: int = 200, cert_radius: float | None = None) -> SolveOutcome:
    """Projected extragradient on z = (u, lam) for T(u, lam) = (A(u) + d_u B - f, F(lam) - d_lam B - g).

    The step shrinks whenever rho |T(zbar) - T(z)| > 0.9 |zbar - z|, so the
    default rho = 0.9 / L (finite-difference L) is only a starting guess.
    """
    if not sys.gradient_capable:
        raise UnsupportedError("extragradient needs operator-form chi, psi and a differentiable B")
    n = sys.n
    K, Lam = sys.K, sys.Lambda

    def proj(z):
        return np.concatenate([K.project(z[:n]), Lam.project(z[n:])])

    def T(z):
        return np.concatenate(sys.operator(z[:n], z[n:]))

    if start is None:
        z = proj(np.zeros(n + sys.m))
    else:
        z = proj(np.concatenate([np.atleast_1d(np.asarray(s, dtype=float)) for s in start]))
    if rho is None:
        lip = _lipschitz_estimate(sys, z, 0.1 * max(1.0, float(np.linalg.norm(z))), seed)
        rho = 0.9 / lip if lip > 0 else 1.0
    rho0 = float(rho)
    rows, growth, prev_step, step = [], 0, np.inf, np.inf
    recent = deque(maxlen=DIVERGENCE_WINDOW + 1)  # kept for divergence reports even without trace
    it = 0
    for it in range(1, max_iters + 1):
        tz = T(z)
        while True:
            zbar = proj(z - rho * tz)
            dz = np.linalg.norm(zbar - z)
            if dz <= tol:
                break
            tbar = T(zbar)
            if rho * np.linalg.norm(tbar - tz) <= 0.9 * dz:
                break
            rho *= 0.5
        if dz <= tol:
            # z is (numerically) a fixed point of the projected step
            step = dz
            it -= 1
            break
        z_new = proj(z - rho * tbar)
        step = float(np.linalg.norm(z_new - z))
        z = z_new
        if trace:
            # natural residual |z - P(z - T(z))|, zero exactly at solutions
            rows.append((it, step, rho, float(np.linalg.norm(z - proj(z - T(z))))))
        else:
            recent.append((it, step, rho))
        growth = growth + 1 if step > prev_step else 0
        prev_step = step
        if not np.all(np.isfinite(z)):
            raise DivergenceError(f"non-finite iterate at iteration {it}", rows or list(recent))
        if growth >= DIVERGENCE_WINDOW:
            raise DivergenceError(f"step norm grew for {DIVERGENCE_WINDOW} consecutive iterations",
                                  rows or list(recent))
        if step <= tol:
            break
    u, lam = z[:n].copy(), z[n:].copy()
    report = certify(sys, u, lam, count=test_count, seed=seed, radius=cert_radius)
    ok = bool(step <= tol and report.max_violation <= cert_tol)
    if not ok:
        log.info("extragradient stopped at step %.3g, residual %.3g", step, report.max_violation)
    info = {"rho0": rho0, "rho": rho, "final_step": step, "step_tol": tol,
            "divergence_window": DIVERGENCE_WINDOW}
    return SolveOutcome(u, lam, report, it, ok, cert_tol, "extragrad", trace=rows, info=info)


# -- Uzawa -------------------------------------------------------------------

def uzawa_sp(a, b, f, Lam: cs.ConvexSet, rho: float | None = None, max_iters: int = 100_000,
             tol: float = 1e-12, cert_tol: float = DEFAULT_SOLUTION_TOL, lam0=None, seed: int = 0,
             trace: bool = False, test_count: int = 200) -> SolveOutcome:
    """Uzawa iteration for the saddle-point problem.

    u <- a^{-1}(f - b^T lam), lam <- P_Lambda(lam + rho b u).  Convergence
    needs 0 < rho < 2 lambda_min(a) / |b|^2; the default is half that bound.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if not np.allclose(a, a.T, rtol=1e-12, atol=1e-14):
        raise ValueError("a must be symmetric")
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise ValueError("a is singular or not positive definite") from None
    from scipy.linalg import cho_solve

    def solve(rhs):
        return cho_solve((chol, True), rhs)

    if rho is None:
        nb = np.linalg.norm(b, 2)
        rho = np.linalg.eigvalsh(a)[0] / nb ** 2 if nb > 0 else 1.0
    lam = Lam.project(np.zeros(b.shape[0]) if lam0 is None else np.asarray(lam0, dtype=float))
    rows, step, it = [], np.inf, 0
    for it in range(1, max_iters + 1):
        u = solve(f - b.T @ lam)
        lam_new = Lam.project(lam + rho * (b @ u))
        step = float(np.linalg.norm(lam_new - lam))
        lam = lam_new
        if trace:
            rows.append((it, step, rho))
        if step <= tol:
            break
    u = solve(f - b.T @ lam)
    sys = build_special("SP", a=a, b=b, f=f, Lam=Lam)
    report = certify(sys, u, lam, count=test_count, seed=seed)
    saddle = saddle_check(a, b, f, (u, lam), Lam, seed=seed)
    ok = bool(step <= tol and report.max_violation <= cert_tol)
    info = {"rho": rho, "final_step": step, "saddle_left": saddle.left_violation,
            "saddle_right": saddle.right_violation, "saddle_pass": saddle.passed}
    return SolveOutcome(u, lam, report, it, ok, cert_tol, "uzawa", trace=rows, info=info)


# -- ball expansion ----------------------------------------------------------

def ball_expansion(sys: CoupledSystem, inner: str = "extragrad", R0: float = 1.0, growth: float = 2.0,
                   max_rounds: int = 20, tol: float = DEFAULT_SOLUTION_TOL, margin: float = 0.05,
                   seed: int = 0, inner_options: dict | None = None, probe_radii=None) -> SolveOutcome:
    """Solve on K_R x Lambda_R for growing R until the solution is interior.

    Only unbounded sets are intersected with the ball, and only their
    components enter the interiority test |.| < R (1 - margin).  An interior
    point is then certified against test points drawn from the original sets
    within radius 10 R.
    """
    if R0 <= 0 or growth <= 1:
        raise ValueError("need R0 > 0 and growth > 1")
    if not (sys.K.contains(np.zeros(sys.n)) and sys.Lambda.contains(np.zeros(sys.m))):
        raise ValueError("ball expansion assumes 0 in K and 0 in Lambda")
    restrict_u, restrict_l = not sys.K.is_bounded, not sys.Lambda.is_bounded
    opts = dict(inner_options or {})
    R, history, rows, total = float(R0), [], [], 0
    start = None
    last = None
    for _ in range(max_rounds):
        history.append(R)
        sub = sys.with_sets(sys.K.restrict_to_ball(R) if restrict_u else None,
                            sys.Lambda.restrict_to_ball(R) if restrict_l else None)
        if inner in ("extragrad", "extragradient"):
            out = extragradient(sub, start=start, seed=seed, cert_tol=tol, **opts)
        elif inner in ("brute", "brute_force"):
            out = brute_force(sub, tol=tol, **opts)
        else:
            raise ValueError(f"unknown inner solver {inner!r}")
        total += out.iterations
        sizes = []
        if restrict_u:
            sizes.append(np.linalg.norm(out.u))
        if restrict_l:
            sizes.append(np.linalg.norm(out.lam))
        size = max(sizes) if sizes else 0.0
        interior = size < R * (1.0 - margin)
        rows.append((R, size, R * (1.0 - margin) - size, interior, out.report.max_violation))
        last = out
        if interior and out.converged:
            report = certify(sys, out.u, out.lam, seed=seed, radius=10.0 * R)
            if report.max_violation <= tol:
                info = {"inner": inner, "margin": margin, "growth": growth, "final_radius": R,
                        "certification_radius": 10.0 * R, **{f"inner.{k}": v for k, v in out.info.items()}}
                return SolveOutcome(out.u, out.lam, report, total, True, tol, "ball",
                                    radius_history=history, trace=rows, info=info)
        start = (out.u, out.lam)
        R *= growth
    probe = probe_coercivity(sys, "C1", radii=probe_radii, seed=seed)
    outcome = None
    if last is not None:
        outcome = SolveOutcome(last.u, last.lam, last.report, total, False, tol, "ball",
                               radius_history=history, trace=rows, info={"inner": inner})
    raise NonCoerciveError(
        f"no interior solution after {max_rounds} rounds (last radius {history[-1]:g}); "
        f"C1 probe verdict: {probe.verdict}", probe, outcome)
