"""Coupled systems of variational inequalities and their residual certificates.

A :class:`CoupledSystem` asks for (u, lam) in K x Lambda with

    B(v, lam) - B(u, lam) + chi(u, v - u) >= <f, v - u>        for all v in K
    B(u, lam) - B(u, mu)  + psi(lam, mu - lam) >= <g, mu - lam> for all mu in Lambda

Nothing here can quantify over all of K x Lambda, so "solution" always means
"no violation beyond tolerance over an explicit, recorded test set".

All oracles work on batches: vectors carry the coordinate on the last axis
and any leading axes broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kvtext
from . import sets as cs

DEFAULT_SOLUTION_TOL = 1e-8


class FeasibilityError(ValueError):
    """A point lies outside its constraint set."""


class NoOperatorError(TypeError):
    """A bifunction or coupling lacks the gradient/operator a solver needs."""


class NonConvexError(ValueError):
    """A functional failed a midpoint convexity probe."""


def _dot(a, b):
    return np.sum(np.asarray(a) * np.asarray(b), axis=-1)


class Bifunction:
    """chi(u, v) on R^dim x R^dim.

    Kinds: ``zero``, ``bilinear`` (u^T M v), ``operator_linear`` (<A u, v>),
    ``operator_callable`` (<op(u), v>, or an arbitrary value oracle) and
    ``convex_difference`` (J(u + w) - J(u)).
    """

    def __init__(self, kind: str, dim: int, value: Callable, op: Callable | None = None, **data):
        self.kind = kind
        self.dim = int(dim)
        self._value = value
        self._op = op
        self.data = data

    def __repr__(self):
        return f"Bifunction({self.kind}, dim={self.dim})"

    def __call__(self, u, v):
        return self._value(np.asarray(u, dtype=float), np.asarray(v, dtype=float))

    @property
    def has_operator(self) -> bool:
        return self._op is not None

    def operator(self, u):
        """The map A with chi(u, v) = <A(u), v>."""
        if self._op is None:
            raise NoOperatorError(f"{self.kind} bifunction has no operator form")
        return self._op(np.asarray(u, dtype=float))


def zero_bifunction(dim: int) -> Bifunction:
    def value(u, v):
        return np.zeros(np.broadcast_shapes(u.shape, v.shape)[:-1])

    def op(u):
        return np.zeros_like(u)

    return Bifunction("zero", dim, value, op)


def bilinear_bifunction(matrix) -> Bifunction:
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError("bilinear bifunction needs a square matrix")
    return Bifunction("bilinear", M.shape[0], lambda u, v: _dot(u @ M, v), lambda u: u @ M, matrix=M)


def operator_linear(matrix) -> Bifunction:
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError("operator_linear needs a square matrix")
    return Bifunction("operator_linear", A.shape[0], lambda u, v: _dot(u @ A.T, v), lambda u: u @ A.T, matrix=A)


def operator_callable(dim: int, op: Callable | None = None, value: Callable | None = None) -> Bifunction:
    """From an operator A (chi = <A(u), v>) or from a bare value oracle."""
    if op is None and value is None:
        raise ValueError("operator_callable needs op or value")
    if value is None:
        def value(u, v):
            return _dot(op(u), v)
    return Bifunction("operator_callable", dim, value, op)


def convex_difference(dim: int, J: Callable, grad: Callable | None = None) -> Bifunction:
    """chi(u, w) = J(u + w) - J(u); an operator exists only for smooth J."""
    def value(u, w):
        return J(u + w) - J(u)

    return Bifunction("convex_difference", dim, value, grad, J=J)


class Coupling:
    """B(u, lam) with optional partial gradients."""

    def __init__(self, n: int, m: int, value: Callable, grad_u: Callable | None = None,
                 grad_lam: Callable | None = None, kind: str = "callable", **data):
        self.n, self.m = int(n), int(m)
        self.kind = kind
        self._value = value
        self._grad_u = grad_u
        self._grad_lam = grad_lam
        self.data = data

    def __repr__(self):
        return f"Coupling({self.kind}, n={self.n}, m={self.m})"

    def __call__(self, u, lam):
        return self._value(np.asarray(u, dtype=float), np.asarray(lam, dtype=float))

    @property
    def has_gradients(self) -> bool:
        return self._grad_u is not None and self._grad_lam is not None

    def grad_u(self, u, lam):
        if self._grad_u is None:
            raise NoOperatorError("coupling has no u-gradient")
        return self._grad_u(np.asarray(u, dtype=float), np.asarray(lam, dtype=float))

    def grad_lam(self, u, lam):
        if self._grad_lam is None:
            raise NoOperatorError("coupling has no lambda-gradient")
        return self._grad_lam(np.asarray(u, dtype=float), np.asarray(lam, dtype=float))


def bilinear_coupling(matrix) -> Coupling:
    """B(u, lam) = lam^T M u with M of shape (m, n)."""
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    m, n = M.shape
    return Coupling(
        n, m,
        lambda u, lam: _dot(u @ M.T, lam),
        lambda u, lam: np.broadcast_to(lam @ M, np.broadcast_shapes(u.shape, (lam @ M).shape)).copy(),
        lambda u, lam: np.broadcast_to(u @ M.T, np.broadcast_shapes(lam.shape, (u @ M.T).shape)).copy(),
        kind="bilinear", matrix=M,
    )


def zero_coupling(n: int, m: int) -> Coupling:
    def value(u, lam):
        return np.zeros(np.broadcast_shapes(u.shape[:-1], lam.shape[:-1]))

    return Coupling(n, m, value, lambda u, lam: np.zeros_like(u * 1.0),
                    lambda u, lam: np.zeros_like(lam * 1.0), kind="zero")


@dataclass
class CoupledSystem:
    n: int
    m: int
    B: Coupling
    chi: Bifunction
    psi: Bifunction
    f: np.ndarray
    g: np.ndarray
    K: cs.ConvexSet
    Lambda: cs.ConvexSet
    label: str = "S"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.f = np.atleast_1d(np.asarray(self.f, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        checks = [
            ("f", self.f.size, self.n), ("g", self.g.size, self.m),
            ("K", self.K.dim, self.n), ("Lambda", self.Lambda.dim, self.m),
            ("chi", self.chi.dim, self.n), ("psi", self.psi.dim, self.m),
            ("B.n", self.B.n, self.n), ("B.m", self.B.m, self.m),
        ]
        for name, got, want in checks:
            if got != want:
                raise ValueError(f"dimension mismatch: {name} has {got}, expected {want}")
        # witnesses are computed when the sets are built; reaching here means nonempty
        self.witness = (self.K.witness, self.Lambda.witness)

    @property
    def gradient_capable(self) -> bool:
        return self.chi.has_operator and self.psi.has_operator and self.B.has_gradients

    def operator(self, u, lam):
        """T(u, lam) = (A(u) + d_u B - f, F(lam) - d_lam B - g)."""
        tu = self.chi.operator(u) + self.B.grad_u(u, lam) - self.f
        tl = self.psi.operator(lam) - self.B.grad_lam(u, lam) - self.g
        return tu, tl

    def with_sets(self, K=None, Lambda=None) -> "CoupledSystem":
        return CoupledSystem(self.n, self.m, self.B, self.chi, self.psi, self.f, self.g,
                             self.K if K is None else K, self.Lambda if Lambda is None else Lambda,
                             self.label, dict(self.meta))


def check_feasible(sys: CoupledSystem, u, lam, tol: float = cs.FEAS_TOL):
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if u.shape != (sys.n,) or lam.shape != (sys.m,):
        raise ValueError(f"expected shapes ({sys.n},) and ({sys.m},), got {u.shape} and {lam.shape}")
    if not sys.K.contains(u, tol):
        raise FeasibilityError(f"u = {u} is not in K")
    if not sys.Lambda.contains(lam, tol):
        raise FeasibilityError(f"lambda = {lam} is not in Lambda")
    return u, lam


def bns_h(sys: CoupledSystem, at, test) -> float:
    """h([u,lam],[v,mu]) = <f,v-u> + <g,mu-lam> - chi(u,v-u) - psi(lam,mu-lam) + B(u,mu) - B(v,lam).

    (u, lam) solves the system on a test set iff h <= 0 on all of it.
    """
    u, lam = check_feasible(sys, *at)
    v, mu = check_feasible(sys, *test)
    return float(
        sys.f @ (v - u) + sys.g @ (mu - lam) - sys.chi(u, v - u) - sys.psi(lam, mu - lam)
        + sys.B(u, mu) - sys.B(v, lam)
    )


@dataclass
class TestSet:
    V: np.ndarray
    M: np.ndarray
    seed: int | None = None
    radius: float | None = None

    __test__ = False  # not a pytest class

    @property
    def size(self) -> int:
        return int(len(self.V) + len(self.M))

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        if not pairs:
            raise ValueError("empty test set")
        V = np.array([np.atleast_1d(np.asarray(p[0], dtype=float)) for p in pairs])
        M = np.array([np.atleast_1d(np.asarray(p[1], dtype=float)) for p in pairs])
        return cls(V, M)


def _perturbations(center, S: cs.ConvexSet, scales, max_coords: int, rng) -> np.ndarray:
    coords = np.arange(S.dim)
    if S.dim > max_coords:
        coords = np.sort(rng.choice(S.dim, max_coords, replace=False))
    pts = []
    for delta in scales:
        for i in coords:
            for sgn in (1.0, -1.0):
                p = center.copy()
                p[i] += sgn * delta
                pts.append(p)
    return S.project(np.array(pts)) if pts else np.zeros((0, S.dim))


def generate_test_points(sys: CoupledSystem, center, count: int = 200, seed: int = 0,
                         radius: float | None = None, K=None, Lambda=None) -> TestSet:
    """Seeded mixture of set extremes, random feasible points, and coordinate
    perturbations of the candidate.

    ``radius`` bounds the sampling region of unbounded sets; by default it is
    max(1, 2 * |candidate|).  ``K``/``Lambda`` override the sets sampled from.
    """
    K = sys.K if K is None else K
    Lam = sys.Lambda if Lambda is None else Lambda
    u, lam = (np.asarray(c, dtype=float) for c in center)
    if radius is None:
        radius = max(1.0, 2.0 * float(np.linalg.norm(np.concatenate([u, lam]))))
    rng = np.random.default_rng(seed)
    scales = (0.1 * radius, 1e-3 * radius)

    def block(S, c):
        parts = [c[None, :], S.extremes(radius), S.sample(rng, count, radius),
                 _perturbations(c, S, scales, 32, rng)]
        return np.vstack(parts)

    return TestSet(block(K, u), block(Lam, lam), seed=seed, radius=float(radius))


@dataclass
class ResidualReport:
    r1: float
    r2: float
    witness1: np.ndarray
    witness2: np.ndarray
    test_set_size: int
    seed: int | None = None
    radius: float | None = None

    @property
    def max_violation(self) -> float:
        return max(self.r1, self.r2)

    def solved(self, tol: float = DEFAULT_SOLUTION_TOL) -> bool:
        return self.max_violation <= tol

    def to_kv(self) -> str:
        return kvtext.dumps(
            {
                "r1": self.r1,
                "r2": self.r2,
                "max_violation": self.max_violation,
                "test_set_size": self.test_set_size,
                "seed": self.seed,
                "radius": self.radius,
            }
        )

    def witness_rows(self):
        yield ["inequality"] + [f"c{i}" for i in range(max(len(self.witness1), len(self.witness2)))]
        yield ["1"] + [kvtext.fmt_float(x) for x in self.witness1]
        yield ["2"] + [kvtext.fmt_float(x) for x in self.witness2]


def residual_terms(sys: CoupledSystem, u, lam, V, M):
    """Signed violations of the first inequality at each v in V and of the
    second at each mu in M."""
    V = np.atleast_2d(V)
    M = np.atleast_2d(M)
    b_ul = sys.B(u, lam)
    t1 = (V - u) @ sys.f + b_ul - sys.B(V, lam) - sys.chi(u, V - u)
    t2 = (M - lam) @ sys.g + sys.B(u, M) - b_ul - sys.psi(lam, M - lam)
    return np.asarray(t1, dtype=float), np.asarray(t2, dtype=float)


def residual(sys: CoupledSystem, u, lam, test_points) -> ResidualReport:
    """Worst signed violation of each inequality over the test set.

    ``test_points`` is a :class:`TestSet` or an iterable of (v, mu) pairs.
    """
    u, lam = check_feasible(sys, u, lam)
    ts = test_points if isinstance(test_points, TestSet) else TestSet.from_pairs(test_points)
    if len(ts.V) == 0 or len(ts.M) == 0:
        raise ValueError("empty test set")
    t1, t2 = residual_terms(sys, u, lam, ts.V, ts.M)
    i, j = int(np.argmax(t1)), int(np.argmax(t2))
    return ResidualReport(float(t1[i]), float(t2[j]), ts.V[i].copy(), ts.M[j].copy(),
                          ts.size, ts.seed, ts.radius)


def certify(sys: CoupledSystem, u, lam, count: int = 200, seed: int = 0, radius=None,
            K=None, Lambda=None) -> ResidualReport:
    ts = generate_test_points(sys, (u, lam), count, seed, radius, K, Lambda)
    return residual(sys, u, lam, ts)


# -- special cases -----------------------------------------------------------

@dataclass
class ConvexFunctional:
    """Convex J on R^n: batched ``value`` plus optional subgradient access.

    ``subgradients(x)`` returns the extreme points of dJ(x) as rows, giving
    the exact directional derivative J'(x; w) = max_k <xi_k, w>.
    """

    dim: int
    value: Callable
    subgradients: Callable | None = None
    gradient: Callable | None = None

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    def directional(self, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        if self.gradient is not None:
            return _dot(self.gradient(x), w)
        if self.subgradients is None:
            raise NoOperatorError("directional derivative needs subgradients or a gradient")
        shape = np.broadcast_shapes(x.shape, w.shape)
        xb = np.broadcast_to(x, shape).reshape(-1, self.dim)
        wb = np.broadcast_to(w, shape).reshape(-1, self.dim)
        out = np.array([np.max(np.atleast_2d(self.subgradients(xi)) @ wi) for xi, wi in zip(xb, wb)])
        return out.reshape(shape[:-1])


def check_convex(J: ConvexFunctional, samples: int = 200, seed: int = 0, scale: float = 2.0):
    """Reject J on the first sampled midpoint-convexity violation."""
    rng = np.random.default_rng(seed)
    x = scale * rng.standard_normal((samples, J.dim))
    y = scale * rng.standard_normal((samples, J.dim))
    lhs = np.asarray(J(0.5 * (x + y)))
    rhs = 0.5 * (np.asarray(J(x)) + np.asarray(J(y)))
    tol = 1e-10 * (1.0 + np.abs(rhs))
    bad = np.flatnonzero(lhs > rhs + tol)
    if bad.size:
        k = bad[0]
        raise NonConvexError(f"midpoint convexity fails at x={x[k]}, y={y[k]}: {lhs[k]} > {rhs[k]}")


def _as_operator(A, n):
    if callable(A):
        return A, None
    mat = np.atleast_2d(np.asarray(A, dtype=float))
    if mat.shape != (n, n):
        raise ValueError(f"operator matrix must be {n}x{n}, got {mat.shape}")
    return (lambda u: u @ mat.T), mat


def build_special(variant: str, **parts) -> CoupledSystem:
    """Embed a classical special case into the coupled system.

    SP         a, b, f, Lam
    S1         A (matrix or callable), b, f, Lam
    S2_convex  A, b, f, Lam, J            (J' replaces the Clarke derivative)
    S3         J, b, f, Lam, phi=None     (phi defaults to 0)
    S4_convex  A, F, B, J, G, f, g, K, Lam, h=None  (h: u -> weight >= 0)

    K defaults to the whole space for SP..S3; the equality line then holds
    because both +d and -d are admissible directions.
    """
    variant = variant.upper() if variant.lower() in ("sp", "s1", "s3") else variant
    if variant == "SP":
        a = np.atleast_2d(np.asarray(parts["a"], dtype=float))
        b = np.atleast_2d(np.asarray(parts["b"], dtype=float))
        n = a.shape[0]
        if a.shape != (n, n) or b.shape[1] != n:
            raise ValueError(f"SP needs a (n x n) and b (m x n); got {a.shape}, {b.shape}")
        chi = operator_linear(a)
        B = bilinear_coupling(b)
        psi = zero_bifunction(b.shape[0])
    elif variant in ("S1", "S2_convex"):
        b = np.atleast_2d(np.asarray(parts["b"], dtype=float))
        n = b.shape[1]
        op, mat = _as_operator(parts["A"], n)
        B = bilinear_coupling(b)
        psi = zero_bifunction(b.shape[0])
        if variant == "S1":
            chi = operator_linear(mat) if mat is not None else operator_callable(n, op=op)
        else:
            J = parts["J"]
            check_convex(J)

            def value(u, w, op=op, J=J):
                return _dot(op(u), w) + J.directional(u, w)

            chi = operator_callable(n, value=value)
            chi.kind = "operator_plus_directional"
    elif variant == "S3":
        b = np.atleast_2d(np.asarray(parts["b"], dtype=float))
        n = b.shape[1]
        J = parts["J"]
        phi = parts.get("phi")
        check_convex(J)
        if phi is not None:
            check_convex(phi)
            total = lambda x: J(x) + phi(x)  # noqa: E731
        else:
            total = J
        chi = convex_difference(n, total)
        B = bilinear_coupling(b)
        psi = zero_bifunction(b.shape[0])
    elif variant == "S4_convex":
        B = parts["B"]
        n, m = B.n, B.m
        opA, _ = _as_operator(parts["A"], n)
        opF, _ = _as_operator(parts["F"], m)
        J, G = parts["J"], parts["G"]
        check_convex(J)
        check_convex(G)
        weight = parts.get("h") or (lambda u: np.ones(np.shape(u)[:-1]))

        def chi_value(u, v):
            return _dot(opA(u), v) + weight(u) * J.directional(u, v)

        def psi_value(lam, mu):
            return _dot(opF(lam), mu) + G.directional(lam, mu)

        chi = operator_callable(n, value=chi_value)
        psi = operator_callable(m, value=psi_value)
        return CoupledSystem(n, m, B, chi, psi, parts["f"], parts["g"], parts["K"], parts["Lam"],
                             label="S4_convex")
    else:
        raise ValueError(f"unknown special case {variant!r}")
    m = B.m
    K = parts.get("K") or cs.whole_space(n)
    return CoupledSystem(n, m, B, chi, psi, parts["f"], np.zeros(m), K, parts["Lam"], label=variant)


# -- saddle-point energy -----------------------------------------------------

def energy_sp(a, b, f, v, mu) -> float:
    """E(v, mu) = 1/2 a(v, v) + b(v, mu) - (f, v), with b(v, mu) = mu^T b v."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    v = np.asarray(v, dtype=float)
    mu = np.asarray(mu, dtype=float)
    f = np.asarray(f, dtype=float)
    out = 0.5 * _dot(v @ a.T, v) + _dot(v @ b.T, mu) - _dot(v, f)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class SaddleReport:
    left_violation: float  # max_mu E(u, mu) - E(u, lam)
    right_violation: float  # max_v E(u, lam) - E(v, lam)
    worst_mu: np.ndarray
    worst_v: np.ndarray
    samples: int
    seed: int
    tol: float = 1e-9

    @property
    def left_pass(self) -> bool:
        return self.left_violation <= self.tol

    @property
    def right_pass(self) -> bool:
        return self.right_violation <= self.tol

    @property
    def passed(self) -> bool:
        return self.left_pass and self.right_pass

    def to_kv(self) -> str:
        return kvtext.dumps({
            "left_violation": self.left_violation, "right_violation": self.right_violation,
            "left_pass": self.left_pass, "right_pass": self.right_pass, "passed": self.passed,
            "samples": self.samples, "seed": self.seed, "tol": self.tol,
        })


def saddle_check(a, b, f, candidate, Lam: cs.ConvexSet, samples: int = 1000, seed: int = 0,
                 scale: float = 1.0, tol: float = 1e-9) -> SaddleReport:
    """Sample E(u, mu) <= E(u, lam) <= E(v, lam) with v ~ N(u, scale^2) and mu in Lambda."""
    u, lam = (np.atleast_1d(np.asarray(c, dtype=float)) for c in candidate)
    if not Lam.contains(lam):
        raise FeasibilityError(f"lambda = {lam} is not in Lambda")
    rng = np.random.default_rng(seed)
    V = u + scale * rng.standard_normal((samples, u.size))
    mus = np.vstack([Lam.extremes(), Lam.sample(rng, samples, max(1.0, 2 * np.linalg.norm(lam)))])
    e0 = energy_sp(a, b, f, u, lam)
    left = energy_sp(a, b, f, u, mus) - e0
    right = e0 - energy_sp(a, b, f, V, lam)
    i, j = int(np.argmax(left)), int(np.argmax(right))
    return SaddleReport(float(left[i]), float(right[j]), mus[i], V[j], samples, seed, tol)
