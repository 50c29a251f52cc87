"""P1 discretization of the antiplane Phi-Laplacian problem with Tresca friction.

Unknowns live on the free nodes (part 1 is clamped and eliminated).  The
friction multipliers live on contact nodes (part 3) that are not clamped, and
the multiplier set is the weighted box |lam_i| <= w_i, where w_i is g times the
lumped boundary length of node i.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .. import orlicz
from .. import sets as cs
from ..system import Coupling, CoupledSystem, ResidualReport, operator_callable, zero_bifunction
from ..solvers import SolveOutcome, ball_expansion
from .mesh import Mesh


class EmptyMultiplierSpaceError(ValueError):
    """Every contact node is clamped, so there is nothing to put a multiplier on."""


@dataclass(frozen=True)
class HIntegrand:
    """Convex h(t) (constant in x): ``zero``, ``quadratic`` (c t^2 / 2) or ``abs`` (c |t|)."""

    kind: str = "zero"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "quadratic", "abs"):
            raise ValueError(f"unknown h kind {self.kind!r}")
        if self.c < 0:
            raise ValueError("h needs c >= 0 to stay convex")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "quadratic":
            return 0.5 * self.c * t * t
        return self.c * np.abs(t)

    def subgradient(self, t):
        """Interval (lo, hi) of the subdifferential at t."""
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            z = np.zeros_like(t)
            return z, z
        if self.kind == "quadratic":
            d = self.c * t
            return d, d
        s = np.sign(t)
        lo = np.where(t == 0, -self.c, self.c * s)
        hi = np.where(t == 0, self.c, self.c * s)
        return lo, hi

    def selection(self, t):
        lo, hi = self.subgradient(t)
        return 0.5 * (lo + hi)


def _nodal(mesh: Mesh, value, label: int) -> np.ndarray:
    """Expand a constant, a per-part-node array or a full nodal array."""
    nodes = mesh.part_nodes(label)
    arr = np.asarray(value, dtype=float)
    out = np.zeros(mesh.num_nodes)
    if arr.ndim == 0:
        out[nodes] = float(arr)
    elif arr.size == nodes.size:
        out[nodes] = arr
    elif arr.size == mesh.num_nodes:
        out[nodes] = arr[nodes]
    else:
        raise ValueError(f"boundary data for part {label} must be a constant or have {nodes.size} entries")
    return out


@dataclass
class FemProblem:
    mesh: Mesh
    phi: orlicz.NFunctionSpec
    h: HIntegrand = field(default_factory=HIntegrand)
    f2: object = 0.0  # traction on part 2
    g: object = 0.0  # friction bound on part 3

    def __post_init__(self):
        self.f2_nodal = _nodal(self.mesh, self.f2, 2)
        self.g_nodal = _nodal(self.mesh, self.g, 3)
        if np.any(self.g_nodal < 0):
            raise ValueError("friction bound g must be nonnegative")


@dataclass
class DiscreteField:
    values: np.ndarray
    dirichlet_mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values[self.dirichlet_mask] != 0.0):
            raise ValueError("field is nonzero on clamped nodes")


def embed(mesh: Mesh, u_free):
    """Free-node values (batched) to full nodal arrays with zeros on part 1."""
    u_free = np.asarray(u_free, dtype=float)
    out = np.zeros(u_free.shape[:-1] + (mesh.num_nodes,))
    out[..., mesh.free_nodes] = u_free
    return out


def assemble_phi_residual(mesh: Mesh, phi: orlicz.NFunctionSpec, u, check_mask: bool = True) -> np.ndarray:
    """<I'(u), v_i> = sum_T area phi(|grad u|)/|grad u| grad u . grad v_i for every node i.

    Triangles with zero gradient contribute nothing.  ``u`` is a full nodal
    array, optionally with leading batch axes.
    """
    u = np.asarray(u, dtype=float)
    if check_mask and np.any(u[..., mesh.dirichlet_mask] != 0.0):
        raise ValueError("u must vanish on clamped nodes")
    G = mesh.gradients(u)  # (..., T, 2)
    s = np.linalg.norm(G, axis=-1)
    pos = s > 0
    factor = np.zeros_like(s)
    factor[pos] = orlicz.eval_phi(phi, s[pos]) / s[pos]
    local = np.einsum("...td,tkd->...tk", G, mesh.basis_gradients)
    contrib = (mesh.areas * factor)[..., None] * local
    flat = contrib.reshape(-1, 3 * len(mesh.triangles))
    out = (mesh.scatter @ flat.T).T
    return out.reshape(u.shape[:-1] + (mesh.num_nodes,))


def phi_energy(mesh: Mesh, phi: orlicz.NFunctionSpec, u) -> np.ndarray:
    """I(u) = sum_T area Phi(|grad u|)."""
    s = np.linalg.norm(mesh.gradients(u), axis=-1)
    return np.asarray(orlicz.eval_big_phi(phi, s)) @ mesh.areas


def stiffness_matrix(mesh: Mesh) -> sparse.csr_matrix:
    """Linear P1 stiffness (the power(2) residual is this matrix times u)."""
    Bg = mesh.basis_gradients
    local = np.einsum("tid,tjd->tij", Bg, Bg) * mesh.areas[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    return sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(mesh.num_nodes,) * 2)


def tresca_weights(mesh: Mesh, g) -> np.ndarray:
    """w_i = g_i times half the length of the contact edges at node i, for each
    node of part 3 (sorted by node index)."""
    nodes = mesh.part_nodes(3)
    g_full = _nodal(mesh, g, 3)
    if np.any(g_full < 0):
        raise ValueError("friction bound g must be nonnegative")
    return g_full[nodes] * mesh.boundary_mass(3)[nodes]


def boundary_load(mesh: Mesh, f2) -> np.ndarray:
    """Lumped traction load on the full node set."""
    return mesh.boundary_mass(2) * _nodal(mesh, f2, 2)


def discretize_contact(fem: FemProblem) -> CoupledSystem:
    mesh = fem.mesh
    free = mesh.free_nodes
    n = free.size
    if n == 0:
        raise ValueError("every node is clamped")
    ynodes = np.setdiff1d(mesh.part_nodes(3), mesh.part_nodes(1))
    if ynodes.size == 0:
        raise EmptyMultiplierSpaceError("the contact part lies inside the clamped part")
    m = ynodes.size
    pos = np.searchsorted(free, ynodes)
    P = np.zeros((m, n))
    P[np.arange(m), pos] = 1.0
    all3 = mesh.part_nodes(3)
    w = tresca_weights(mesh, fem.g_nodal)[np.searchsorted(all3, ynodes)]
    area = mesh.node_areas[free]
    h = fem.h

    def chi_op(u):
        return assemble_phi_residual(mesh, fem.phi, embed(mesh, u), check_mask=False)[..., free]

    def B_value(u, lam):
        return np.sum(u[..., pos] * lam, axis=-1) + h.value(u) @ area

    def B_grad_u(u, lam):
        shape = np.broadcast_shapes(u.shape[:-1], lam.shape[:-1]) + (n,)
        out = np.broadcast_to(area * h.selection(u), shape).copy()
        out[..., pos] += lam
        return out

    def B_grad_lam(u, lam):
        shape = np.broadcast_shapes(u.shape[:-1], lam.shape[:-1]) + (m,)
        return np.broadcast_to(u[..., pos], shape).copy()

    B = Coupling(n, m, B_value, B_grad_u, B_grad_lam, kind="contact", P=P)
    chi = operator_callable(n, op=chi_op)
    chi.kind = "phi_laplacian"
    f = boundary_load(mesh, fem.f2_nodal)[free]
    meta = {"free": free, "ynodes": ynodes, "weights": w, "P": P, "node_area": area}
    return CoupledSystem(n, m, B, chi, zero_bifunction(m), f, np.zeros(m), cs.whole_space(n),
                         cs.weighted_linf(w), label="contact", meta=meta)


@dataclass
class ContactSolution:
    u: DiscreteField
    lam: np.ndarray
    report: ResidualReport
    outcome: SolveOutcome
    system: CoupledSystem

    @property
    def weights(self):
        return self.system.meta["weights"]

    @property
    def ynodes(self):
        return self.system.meta["ynodes"]


def solve_contact(fem: FemProblem, R0: float = 1.0, growth: float = 2.0, max_rounds: int = 30,
                  tol: float = 1e-8, seed: int = 0, inner_options=None) -> ContactSolution:
    sys = discretize_contact(fem)
    out = ball_expansion(sys, "extragrad", R0=R0, growth=growth, max_rounds=max_rounds, tol=tol,
                         seed=seed, inner_options=inner_options)
    field_ = DiscreteField(embed(fem.mesh, out.u), fem.mesh.dirichlet_mask)
    return ContactSolution(field_, out.lam, out.report, out, sys)


@dataclass
class ComplementarityReport:
    gap: float
    feasible: bool


def complementarity_report(u, lam, weights) -> ComplementarityReport:
    """gap = sum w|u| - sum lam u, nonnegative for any feasible lam."""
    u, lam, w = (np.asarray(a, dtype=float) for a in (u, lam, weights))
    feasible = bool(np.all(np.abs(lam) <= w + 1e-9))
    return ComplementarityReport(float(w @ np.abs(u) - lam @ u), feasible)


def contact_energy(fem: FemProblem, sys: CoupledSystem, u_free) -> float:
    """J(v) = I(v) + sum area h(v) + sum w |v_Y| - f . v."""
    meta = sys.meta
    full = embed(fem.mesh, u_free)
    return float(phi_energy(fem.mesh, fem.phi, full) + meta["node_area"] @ fem.h.value(u_free)
                 + meta["weights"] @ np.abs(u_free[meta["P"].argmax(axis=1)]) - sys.f @ u_free)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X, _GL_W = 0.5 * (_GL_X + 1.0), 0.5 * _GL_W


def _big_phi_change(phi, a, delta):
    """Phi(a + delta) - Phi(a) without cancellation for small delta.

    Close pairs use delta * mean of phi over the interval (Gauss-Legendre);
    distant pairs subtract directly.
    """
    b = a + delta
    direct = orlicz.eval_big_phi(phi, b) - orlicz.eval_big_phi(phi, a)
    close = np.abs(delta) <= 1e-3 * np.maximum(np.abs(a), np.abs(b))
    if np.any(close):
        a_c, d_c = a[close], delta[close]
        mean = orlicz.eval_phi(phi, a_c[:, None] + d_c[:, None] * _GL_X) @ _GL_W
        direct = np.asarray(direct, dtype=float).copy()
        direct[close] = d_c * mean
    return direct


def _h_change(h: HIntegrand, v, c):
    if h.kind == "quadratic":
        return 0.5 * h.c * (c - v) * (c + v)
    return h.value(c) - h.value(v)


def energy_oracle(fem: FemProblem, iters: int = 200_000, step: float = 1.0, tol: float = 1e-14,
                  return_history: bool = False):
    """Monotone proximal-gradient minimization of the primal energy J.

    Gradient step on I + sum area h (h through its midpoint selection),
    soft-thresholding on the contact nodes, step halved until J decreases
    and the usual quadratic upper bound holds.  Energy changes are computed
    in difference form, so the descent test stays meaningful long after J
    itself has stopped changing in floating point; the returned history is
    J_0 plus the accumulated changes.
    """
    mesh = fem.mesh
    sys = discretize_contact(fem)
    free, meta = mesh.free_nodes, sys.meta
    idx = meta["P"].argmax(axis=1)
    w, area, f = meta["weights"], meta["node_area"], sys.f

    def slopes(v):
        G = mesh.gradients(embed(mesh, v))
        return G, np.linalg.norm(G, axis=-1)

    def grad(v):
        return assemble_phi_residual(mesh, fem.phi, embed(mesh, v), check_mask=False)[free] \
            + area * fem.h.selection(v) - f

    def changes(v, c, slope_v, slope_c):
        """(change of the smooth part, change of J)."""
        (Gv, sv), (Gc, sc) = slope_v, slope_c
        d = c - v
        # |Gc| - |Gv| = (Gc - Gv).(Gc + Gv) / (|Gc| + |Gv|), with Gc - Gv = grad d exactly linear
        dG = mesh.gradients(embed(mesh, d))
        den = sv + sc
        dslope = np.divide(np.sum(dG * (Gc + Gv), axis=-1), den, out=np.zeros_like(den), where=den > 0)
        ds = _big_phi_change(fem.phi, sv, dslope) @ mesh.areas + area @ _h_change(fem.h, v, c) - f @ d
        dn = w @ (np.abs(c[idx]) - np.abs(v[idx]))
        return float(ds), float(ds + dn)

    def prox(v, t):
        out = v.copy()
        y = v[idx]
        out[idx] = np.sign(y) * np.maximum(np.abs(y) - t * w, 0.0)
        return out

    v = np.zeros(free.size)
    J0 = contact_energy(fem, sys, v)
    t, total = float(step), 0.0
    history = [J0]
    for _ in range(iters):
        gv, sv = grad(v), slopes(v)
        while True:
            cand = prox(v - t * gv, t)
            d = cand - v
            d_smooth, dJ = changes(v, cand, sv, slopes(cand))
            if d_smooth <= gv @ d + (d @ d) / (2 * t) and dJ <= 0.0:
                break
            t *= 0.5
            if t < 1e-30:
                break
        if dJ > 0.0 or not np.any(d):
            break  # no certified descent left
        v = cand
        total += dJ
        history.append(J0 + total)
        if np.linalg.norm(d) <= tol * max(1.0, np.linalg.norm(v)):
            break
        t *= 1.25
    out = DiscreteField(embed(mesh, v), mesh.dirichlet_mask)
    return (out, np.array(history)) if return_history else out


def linear_reference(fem: FemProblem, clamp_contact: bool = False) -> np.ndarray:
    """Direct solve of K u = f for power(2) with h = 0; optionally clamp part 3 too."""
    mesh = fem.mesh
    K = stiffness_matrix(mesh)
    load = boundary_load(mesh, fem.f2_nodal)
    fixed = mesh.dirichlet_mask.copy()
    if clamp_contact:
        fixed[mesh.part_nodes(3)] = True
    free = np.flatnonzero(~fixed)
    u = np.zeros(mesh.num_nodes)
    u[free] = spsolve(K[free][:, free].tocsc(), load[free])
    return u


def norm_equivalence_probe(mesh: Mesh, phi: orlicz.NFunctionSpec, gamma1_labels=(1,), samples: int = 200,
                           seed: int = 0, return_ratios: bool = False):
    """Observed range of (|grad u|_Phi + sum_{Gamma_1} |u|) / (|grad u|_Phi + |u|_Phi)
    over random unmasked fields of varied scale."""
    if samples < 10:
        raise ValueError("samples must be >= 10")
    rng = np.random.default_rng(seed)
    bmass = sum(mesh.boundary_mass(lab) for lab in gamma1_labels)
    ratios = []
    while len(ratios) < samples:
        u = rng.standard_normal(mesh.num_nodes) * 10.0 ** rng.uniform(-2, 2)
        if rng.random() < 0.2:
            u += rng.standard_normal() * 10.0 ** rng.uniform(-2, 2)  # near-constant fields
        if not np.any(u):
            continue
        grad_norm = orlicz.luxemburg_norm(np.linalg.norm(mesh.gradients(u), axis=-1), mesh.areas, phi)
        num = grad_norm + bmass @ np.abs(u)
        den = grad_norm + orlicz.luxemburg_norm(u, mesh.node_areas, phi)
        ratios.append(num / den)
    ratios = np.array(ratios)
    if return_ratios:
        return float(ratios.min()), float(ratios.max()), ratios
    return float(ratios.min()), float(ratios.max())
