"""Seeded, randomized checks of the structural hypotheses on chi, psi and B.

Every probe first walks a fixed list of simple candidates (origin and signed
basis vectors), then draws ``samples`` random ones.  The first candidate (by
index) whose violation exceeds the tolerance becomes the witness.  A verdict
of ``pass`` only means no counterexample turned up among the points tried.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import kvtext
from .system import CoupledSystem

VIOLATION_TOL = 1e-10
PASS, COUNTEREXAMPLE, INCONCLUSIVE = "pass", "counterexample", "inconclusive"
LIMIT_STEPS = 10.0 ** -np.arange(1, 9)

CHI_CHECKS = ("H1_zero", "H1_convex_second", "H2_monotone_pair", "H2_homogeneous", "H2_ray_continuity")
B_CHECKS = ("H1_convex_in_u", "H1_concave_in_lambda", "H2_i_lsc_combined", "H2_ii_concave_combined")


@dataclass
class ProbeReport:
    hypothesis: str
    verdict: str
    witness: dict | None
    samples: int
    seed: int
    violation: float | None = None
    detail: dict = field(default_factory=dict)

    def to_kv(self) -> str:
        pairs = [("hypothesis", self.hypothesis), ("verdict", self.verdict),
                 ("samples", self.samples), ("seed", self.seed), ("violation", self.violation)]
        for key, val in (self.witness or {}).items():
            pairs.append((f"witness.{key}", val))
        for key, val in self.detail.items():
            pairs.append((key, val))
        return kvtext.dumps(pairs)


def _tol(scale):
    return VIOLATION_TOL * (1.0 + scale)


def _basis(S, with_zero=True):
    """Origin plus signed unit vectors, projected into S."""
    pts = [np.zeros(S.dim)] if with_zero else []
    for i in range(S.dim):
        e = np.zeros(S.dim)
        e[i] = 1.0
        pts += [e, -e]
    return S.project(np.array(pts))


def _signed_pairs(dim):
    """(e_i, -e_i), (e_i, 0), (0, e_i): cheap pairs that expose most failures."""
    z = np.zeros(dim)
    out = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        out += [(e, -e), (e, z), (z, e), (-e, z)]
    return out


def _points(S, rng, count, radius):
    """Random feasible points, one in four pushed to the boundary region."""
    pts = S.sample(rng, count, radius)
    k = count // 4
    if k:
        lo, hi = S.bounding_box(radius)
        edge = np.where(rng.random((k, S.dim)) < 0.5, lo, hi)
        mix = rng.random((k, 1))
        pts[:k] = S.project(mix * pts[:k] + (1 - mix) * edge)
    return pts


def _first_hit(viol, scale):
    """Index of the first violation or non-finite entry, and its type."""
    viol = np.asarray(viol, dtype=float)
    bad = ~np.isfinite(viol) | (viol > _tol(np.asarray(scale, dtype=float)))
    idx = np.flatnonzero(bad)
    if idx.size == 0:
        return None, None
    i = int(idx[0])
    return i, (COUNTEREXAMPLE if np.isfinite(viol[i]) else INCONCLUSIVE)


def _run(hypothesis, names, columns, viol_fn, samples, seed, detail=None):
    """Evaluate a batched violation function over stacked candidate columns."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    try:
        with np.errstate(all="ignore"):
            viol, scale = viol_fn(*cols)
    except Exception as exc:  # oracle failure
        return ProbeReport(hypothesis, INCONCLUSIVE, None, len(cols[0]), seed,
                           detail={"oracle_error": type(exc).__name__})
    i, kind = _first_hit(viol, scale)
    if i is None:
        return ProbeReport(hypothesis, PASS, None, len(cols[0]), seed, detail=detail or {})
    wit = {n: c[i] for n, c in zip(names, cols)}
    return ProbeReport(hypothesis, kind, wit, len(cols[0]), seed, float(viol[i]), detail or {})


# -- violation functions (positive means violated) ---------------------------

def _bif_violation(check, bif):
    if check == "H1_zero":
        def fn(u):
            val = bif(u, np.zeros_like(u))
            return np.abs(val), np.zeros_like(val)
    elif check == "H1_convex_second":
        def fn(u, v1, v2):
            a, b, c = bif(u, 0.5 * (v1 + v2)), bif(u, v1), bif(u, v2)
            return a - 0.5 * (b + c), np.abs(a) + np.abs(b) + np.abs(c)
    elif check == "H2_monotone_pair":
        def fn(u, v):
            a, b = bif(u, u - v), bif(v, v - u)
            return -(a + b), np.abs(a) + np.abs(b)
    elif check == "H2_homogeneous":
        def fn(u, v, t):
            a, b = bif(u, t * v), t[..., 0] * bif(u, v)
            return np.abs(a - b), np.abs(a) + np.abs(b)
    else:
        raise ValueError(f"unknown check {check!r}")
    return fn


def _bifunction_probe(hypothesis, bif, S, which, samples, seed, radius):
    rng = np.random.default_rng(seed)
    n = S.dim
    base = _basis(S)
    if which == "H2_ray_continuity":
        return _ray_continuity(hypothesis, bif, S, samples, rng, seed, radius)
    if which == "H1_zero":
        cols = [np.vstack([base, _points(S, rng, samples, radius)])]
        names = ["u"]
    elif which == "H1_convex_second":
        det = [(u, a, b) for u in base for a, b in _signed_pairs(n)]
        U = _points(S, rng, samples, radius)
        V1 = radius * rng.standard_normal((samples, n))
        V2 = radius * rng.standard_normal((samples, n))
        cols = [np.vstack([np.array([d[k] for d in det]), R]) for k, R in enumerate((U, V1, V2))]
        names = ["u", "v1", "v2"]
    elif which == "H2_monotone_pair":
        # (e_i, 0) first: it gives the most readable witness
        det = [(c, base[0]) for c in base[1:]] + list(itertools.product(base, base))
        U = _points(S, rng, samples, radius)
        V = _points(S, rng, samples, radius)
        cols = [np.vstack([np.array([d[k] for d in det]), R]) for k, R in enumerate((U, V))]
        names = ["u", "v"]
    elif which == "H2_homogeneous":
        det = [(u, v, t) for u in base for v in base[1:] for t in (2.0, 0.5)]
        U = _points(S, rng, samples, radius)
        V = radius * rng.standard_normal((samples, n))
        T = np.exp(rng.standard_normal(samples))
        cols = [
            np.vstack([np.array([d[0] for d in det]), U]),
            np.vstack([np.array([d[1] for d in det]), V]),
            np.concatenate([[d[2] for d in det], T])[:, None],
        ]
        names = ["u", "v", "t"]
    else:
        raise ValueError(f"unknown check {which!r}; expected one of {CHI_CHECKS}")
    return _run(hypothesis, names, cols, _bif_violation(which, bif), len(cols[0]), seed)


def _limit_verdict(diffs, scale):
    """Classify a sequence of |G(z_k) - G(z)| as k grows (t_k -> 0).

    pass: the gap reaches round-off or has shrunk by five orders of
    magnitude.  counterexample: a gap that stays put over the last three
    steps.  Otherwise undecided.
    """
    diffs = np.asarray(diffs)
    tol = 1e-8 * (1.0 + scale)
    if not np.all(np.isfinite(diffs)):
        return INCONCLUSIVE
    if diffs[-1] <= tol or diffs[-1] <= 1e-5 * diffs[0]:
        return PASS
    tail = diffs[-3:]
    if np.all(tail > 1e3 * tol) and np.ptp(tail) <= 1e-6 * tail.max():
        return COUNTEREXAMPLE
    return INCONCLUSIVE


def _ray_continuity(hypothesis, bif, S, samples, rng, seed, radius):
    n = S.dim
    pairs = _signed_pairs(n)
    det_u = S.project(np.array([a for a, _ in pairs]))
    det_v = S.project(np.array([b for _, b in pairs]))
    det_w = np.array([a - b for a, b in pairs])
    U = np.vstack([det_u, _points(S, rng, samples, radius)])
    V = np.vstack([det_v, _points(S, rng, samples, radius)])
    W = np.vstack([det_w, radius * rng.standard_normal((samples, n))])
    t = LIMIT_STEPS[:, None, None]
    try:
        ref = bif(U, W)
        vals = bif(U + t * (V - U), W)
    except Exception as exc:
        return ProbeReport(hypothesis, INCONCLUSIVE, None, len(U), seed,
                           detail={"oracle_error": type(exc).__name__})
    diffs = np.abs(vals - ref)
    undecided = None
    for k in range(len(U)):
        verdict = _limit_verdict(diffs[:, k], abs(ref[k]))
        if verdict == COUNTEREXAMPLE:
            return ProbeReport(hypothesis, verdict, {"u": U[k], "v": V[k], "w": W[k]}, len(U), seed,
                               float(diffs[-1, k]))
        if verdict == INCONCLUSIVE and undecided is None:
            undecided = k
    if undecided is not None:
        k = undecided
        return ProbeReport(hypothesis, INCONCLUSIVE, {"u": U[k], "v": V[k], "w": W[k]}, len(U), seed,
                           float(diffs[-1, k]))
    return ProbeReport(hypothesis, PASS, None, len(U), seed)


def _default_radius(S, radius):
    return float(radius) if radius is not None else 2.0


def probe_chi(sys: CoupledSystem, which: str, samples: int = 200, seed: int = 0, radius=None) -> ProbeReport:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    return _bifunction_probe(f"chi.{which}", sys.chi, sys.K, which, samples, seed, _default_radius(sys.K, radius))


def probe_psi(sys: CoupledSystem, which: str, samples: int = 200, seed: int = 0, radius=None) -> ProbeReport:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    return _bifunction_probe(f"psi.{which}", sys.psi, sys.Lambda, which, samples, seed,
                             _default_radius(sys.Lambda, radius))


def probe_B(sys: CoupledSystem, which: str, samples: int = 200, seed: int = 0, radius=None) -> ProbeReport:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    B, K, Lam = sys.B, sys.K, sys.Lambda
    r = _default_radius(K, radius)
    bu, bl = _basis(K), _basis(Lam)
    hyp = f"B.{which}"
    if which in ("H1_convex_in_u", "H1_concave_in_lambda"):
        # the fixed argument is the outer loop
        if which == "H1_convex_in_u":
            fixed, S_var, sign = bl, K, 1.0
            ev = lambda x, y: B(x, y)  # noqa: E731
            names = ["lam", "u1", "u2"]
        else:
            fixed, S_var, sign = bu, Lam, -1.0
            ev = lambda x, y: B(y, x)  # noqa: E731
            names = ["u", "lam1", "lam2"]
        pairs = [(S_var.project(a), S_var.project(b)) for a, b in _signed_pairs(S_var.dim)]
        det = [(c, a, b) for c in fixed for a, b in pairs]
        F = _points(Lam if which == "H1_convex_in_u" else K, rng, samples, r)
        X1, X2 = _points(S_var, rng, samples, r), _points(S_var, rng, samples, r)
        cols = [np.vstack([np.array([d[k] for d in det]), R]) for k, R in enumerate((F, X1, X2))]

        def fn(c, x1, x2):
            mid, a, b = ev(0.5 * (x1 + x2), c), ev(x1, c), ev(x2, c)
            return sign * (mid - 0.5 * (a + b)), np.abs(mid) + np.abs(a) + np.abs(b)

        return _run(hyp, names, cols, fn, len(cols[0]), seed)
    if which == "H2_ii_concave_combined":
        det = []
        for v in bu:
            for u1, u2 in itertools.islice(itertools.product(bu, repeat=2), 4 * K.dim + 1):
                for l1, l2 in itertools.islice(itertools.product(bl, repeat=2), 4 * Lam.dim + 1):
                    det.append((v, u1, l1, u2, l2))
        rand = [_points(S, rng, samples, r) for S in (K, K, Lam, K, Lam)]
        cols = [np.vstack([np.array([d[k] for d in det]), R]) for k, R in enumerate(rand)]

        def G(v, u, lam):
            return 2.0 * B(v, lam) - B(u, lam)

        def fn(v, u1, l1, u2, l2):
            mid = G(v, 0.5 * (u1 + u2), 0.5 * (l1 + l2))
            a, b = G(v, u1, l1), G(v, u2, l2)
            return 0.5 * (a + b) - mid, np.abs(mid) + np.abs(a) + np.abs(b)

        return _run(hyp, ["v", "u1", "lam1", "u2", "lam2"], cols, fn, len(cols[0]), seed)
    if which == "H2_i_lsc_combined":
        M = np.vstack([bl, _points(Lam, rng, samples, r)])
        U = np.vstack([np.resize(bu, (len(bl), K.dim)), _points(K, rng, samples, r)])
        L = np.vstack([bl[::-1], _points(Lam, rng, samples, r)])
        DU = np.vstack([np.resize(bu[::-1], (len(bl), K.dim)), rng.standard_normal((samples, K.dim))])
        DL = np.vstack([bl, rng.standard_normal((samples, Lam.dim))])
        t = LIMIT_STEPS[:, None, None]
        try:
            ref = 2.0 * B(U, M) - B(U, L)
            Uk, Lk = U + t * DU, L + t * DL
            vals = 2.0 * B(Uk, M) - B(Uk, Lk)
        except Exception as exc:
            return ProbeReport(hyp, INCONCLUSIVE, None, len(U), seed, detail={"oracle_error": type(exc).__name__})
        # only a drop below the limit value matters for lower semicontinuity
        deficit = np.maximum(ref - vals, 0.0)
        first_undecided = None
        for k in range(len(U)):
            verdict = _limit_verdict(deficit[:, k], abs(ref[k]))
            wit = {"mu": M[k], "u": U[k], "lam": L[k], "du": DU[k], "dlam": DL[k]}
            if verdict == COUNTEREXAMPLE:
                return ProbeReport(hyp, verdict, wit, len(U), seed, float(deficit[-1, k]))
            if verdict == INCONCLUSIVE and first_undecided is None:
                first_undecided = (k, wit)
        if first_undecided is not None:
            k, wit = first_undecided
            return ProbeReport(hyp, INCONCLUSIVE, wit, len(U), seed, float(deficit[-1, k]))
        return ProbeReport(hyp, PASS, None, len(U), seed)
    raise ValueError(f"unknown check {which!r}; expected one of {B_CHECKS}")


# -- coercivity --------------------------------------------------------------

DEFAULT_RADII = 10.0 ** np.arange(0, 5)


def default_rays(n: int, m: int, extra: int = 4, seed: int = 0) -> np.ndarray:
    """Unit rays in R^(n+m): pure-u, pure-lambda, mixed, plus a few random."""
    rays = []
    for i in range(n + m):
        e = np.zeros(n + m)
        e[i] = 1.0
        rays += [e, -e]
    for i in range(n):
        for j in range(n, n + m):
            d = np.zeros(n + m)
            d[i] = d[j] = 1.0 / np.sqrt(2.0)
            rays.append(d)
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((extra, n + m))
    rays += list(g / np.linalg.norm(g, axis=1, keepdims=True))
    return np.array(rays)


def _trend(ratios, threshold):
    """pass / counterexample / inconclusive for one ray's ratio sequence."""
    r = np.asarray(ratios)
    if not np.all(np.isfinite(r)):
        return INCONCLUSIVE
    slack = 1e-12 * (1.0 + np.abs(r[:-1]))
    nonincreasing = np.all(np.diff(r) <= slack)
    if nonincreasing and r[-1] < threshold:
        return PASS
    if nonincreasing or np.all(np.diff(r) >= -slack):
        # a monotone sequence that never drops below the threshold
        return COUNTEREXAMPLE
    return INCONCLUSIVE


def probe_coercivity(sys: CoupledSystem, mode: str = "C1", rays=None, radii=None, threshold: float = -1e3,
                     p: float = 2.0, q: float = 2.0, samples: int = 200, seed: int = 0) -> ProbeReport:
    """Check C1 (or C2 with exponents p, q) along rays z = r * d.

    Points are r * d projected onto K x Lambda.
    C1 ratio: (chi(u,-u) + psi(lam,-lam)) / |z|.
    C2 fits m_chi, m_psi from samples and tracks (B(0,lam) - B(u,0)) / |z|^max(p,q).
    """
    n, m = sys.n, sys.m
    rays = default_rays(n, m, seed=seed) if rays is None else np.atleast_2d(np.asarray(rays, dtype=float))
    radii = DEFAULT_RADII if radii is None else np.asarray(radii, dtype=float)
    if radii.size < 3 or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing with at least 3 values")
    norms = np.linalg.norm(rays, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero ray direction")
    rays = rays / norms[:, None]
    # follow each ray inside K x Lambda; rays along which the feasible set
    # stays bounded never reach large norms and are skipped
    Z = radii[:, None, None] * rays[None, :, :]  # (radius, ray, n+m)
    U, L = sys.K.project(Z[..., :n]), sys.Lambda.project(Z[..., n:])
    size = np.sqrt(np.sum(U * U, axis=-1) + np.sum(L * L, axis=-1))
    keep = size[-1] >= 0.5 * radii[-1]
    if not keep.any():
        raise ValueError("no ray escapes to infinity inside K x Lambda; coercivity is vacuous")
    rays, U, L, size = rays[keep], U[:, keep], L[:, keep], size[:, keep]
    detail = {"mode": mode, "threshold": threshold, "rays": len(rays),
              "skipped_bounded_rays": int((~keep).sum()), "radii": radii}
    with np.errstate(all="ignore"):
        if mode == "C1":
            ratio = (sys.chi(U, -U) + sys.psi(L, -L)) / size
        elif mode == "C2":
            rng = np.random.default_rng(seed)
            su = 10.0 ** rng.uniform(-2, 4, (samples, 1)) * rng.standard_normal((samples, n))
            sl = 10.0 ** rng.uniform(-2, 4, (samples, 1)) * rng.standard_normal((samples, m))
            nu, nl = np.linalg.norm(su, axis=1), np.linalg.norm(sl, axis=1)
            m_chi = float(np.max(sys.chi(su, -su) / nu ** p))
            m_psi = float(np.max(sys.psi(sl, -sl) / nl ** q))
            detail.update(p=p, q=q, m_chi=max(m_chi, 0.0), m_psi=max(m_psi, 0.0))
            ratio = (sys.B(np.zeros_like(U), L) - sys.B(U, np.zeros_like(L))) / size ** max(p, q)
        else:
            raise ValueError(f"unknown coercivity mode {mode!r}")
    first_inconclusive = None
    for k in range(len(rays)):
        verdict = _trend(ratio[:, k], threshold)
        wit = {"ray": rays[k], "ratios": ratio[:, k]}
        if verdict == COUNTEREXAMPLE:
            return ProbeReport(mode, COUNTEREXAMPLE, wit, len(rays) * len(radii), seed,
                               float(ratio[-1, k] - threshold), detail)
        if verdict == INCONCLUSIVE and first_inconclusive is None:
            first_inconclusive = (k, wit)
    if first_inconclusive is not None:
        k, wit = first_inconclusive
        return ProbeReport(mode, INCONCLUSIVE, wit, len(rays) * len(radii), seed, None, detail)
    return ProbeReport(mode, PASS, None, len(rays) * len(radii), seed, None, detail)


def infsup_estimate(b, x_weights=None, y_weights=None) -> float:
    """inf over unit mu of sup over unit v of mu^T b v, norms weighted by the
    given diagonal weights; the smallest singular value of the scaled matrix."""
    b = np.atleast_2d(np.asarray(b, dtype=float))
    m, n = b.shape
    if m == 0 or n == 0:
        raise ValueError("empty matrix")
    wx = np.ones(n) if x_weights is None else np.asarray(x_weights, dtype=float)
    wy = np.ones(m) if y_weights is None else np.asarray(y_weights, dtype=float)
    if np.any(wx <= 0) or np.any(wy <= 0):
        raise ValueError("norm weights must be positive")
    if m > n:
        return 0.0  # some mu annihilates every v
    scaled = b / np.sqrt(wy)[:, None] / np.sqrt(wx)[None, :]
    return float(np.linalg.svd(scaled, compute_uv=False).min())


# -- identifier dispatch -----------------------------------------------------

_SUFFIX_CHI = {"1_iii": "H1_zero", "1_ii": "H1_convex_second", "2_i": "H2_monotone_pair",
               "2_ii": "H2_ray_continuity", "2_iii": "H2_homogeneous"}
_SUFFIX_B = {"1_i": "H1_convex_in_u", "1_ii": "H1_concave_in_lambda",
             "2_i": "H2_i_lsc_combined", "2_ii": "H2_ii_concave_combined"}


def resolve_hypothesis(ident: str):
    """Map a label such as ``H_chi2_i``, ``H_B1`` or ``C1`` to a list of
    (target, check) pairs."""
    key = ident.strip()
    if key in ("C1", "C2"):
        return [("coercivity", key)]
    if not key.startswith("H_"):
        raise ValueError(f"unknown hypothesis {ident!r}")
    body = key[2:]
    for target, table in (("chi", _SUFFIX_CHI), ("psi", _SUFFIX_CHI), ("B", _SUFFIX_B)):
        if body.startswith(target):
            rest = body[len(target):].lstrip("_")
            if rest in ("1", "2"):
                return [(target, v) for k, v in table.items() if k.startswith(rest + "_")]
            if rest in table:
                return [(target, table[rest])]
            if rest in table.values():
                return [(target, rest)]
    raise ValueError(f"unknown hypothesis {ident!r}")


def run_probe(sys: CoupledSystem, ident: str, samples: int = 200, seed: int = 0, **kw) -> list[ProbeReport]:
    out = []
    for target, check in resolve_hypothesis(ident):
        if target == "coercivity":
            out.append(probe_coercivity(sys, check, seed=seed, samples=samples, **kw))
        else:
            fn = {"chi": probe_chi, "psi": probe_psi, "B": probe_B}[target]
            out.append(fn(sys, check, samples=samples, seed=seed))
    return out


def replay(sys: CoupledSystem, report: ProbeReport) -> float:
    """Recompute the violation at a counterexample witness."""
    target, check = report.hypothesis.split(".", 1)
    w = report.witness
    if target in ("chi", "psi"):
        bif = sys.chi if target == "chi" else sys.psi
        args = {"H1_zero": ("u",), "H1_convex_second": ("u", "v1", "v2"),
                "H2_monotone_pair": ("u", "v"), "H2_homogeneous": ("u", "v", "t")}[check]
        viol, _ = _bif_violation(check, bif)(*[np.asarray(w[a], dtype=float) for a in args])
        return float(viol)
    B = sys.B
    if check == "H1_convex_in_u":
        lam, u1, u2 = w["lam"], w["u1"], w["u2"]
        return float(B(0.5 * (u1 + u2), lam) - 0.5 * (B(u1, lam) + B(u2, lam)))
    if check == "H1_concave_in_lambda":
        u, l1, l2 = w["u"], w["lam1"], w["lam2"]
        return float(0.5 * (B(u, l1) + B(u, l2)) - B(u, 0.5 * (l1 + l2)))
    if check == "H2_ii_concave_combined":
        def G(u, lam):
            return 2.0 * B(w["v"], lam) - B(u, lam)
        mid = G(0.5 * (w["u1"] + w["u2"]), 0.5 * (w["lam1"] + w["lam2"]))
        return float(0.5 * (G(w["u1"], w["lam1"]) + G(w["u2"], w["lam2"])) - mid)
    raise ValueError(f"no replay for {report.hypothesis}")
