"""N-functions and the Orlicz-space quantities built from them.

An N-function is described by its generator ``phi`` (odd, continuous,
strictly increasing).  Everything else -- ``Phi``, the complementary
function, indices, Luxemburg norms -- is computed numerically from the
generator, so built-in and tabulated generators go through the same code.

All integrals over [0, t] use a fixed graded Gauss-Legendre rule on [0, 1]
(geometric panels accumulating at 0) scaled by t.  The rule is built once
per spec and never mutated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import kvtext

DEFAULT_INDEX_GRID = np.logspace(-6, 6, 121)
DEFAULT_GROWTH_GRID = np.logspace(0, 8, 81)
DEFAULT_SCALES = 2.0 ** np.arange(11)

_PANEL_RATIO = 0.5
_PANELS = 48


class RangeError(ValueError):
    """A tabulated generator was evaluated above its last sample."""


class UnboundedError(ArithmeticError):
    """Bracket growth for an inversion ran past the overflow guard."""


class DegenerateGeneratorError(ValueError):
    """Phi vanished at a positive argument."""


def _graded_rule(points: int):
    x, w = np.polynomial.legendre.leggauss(points)
    nodes, weights = [], []
    hi = 1.0
    for _ in range(_PANELS):
        lo = hi * _PANEL_RATIO
        half = 0.5 * (hi - lo)
        nodes.append(lo + (x + 1.0) * half)
        weights.append(w * half)
        hi = lo
    # [0, hi] tail: trapezoid against phi(0) = 0
    nodes.append(np.array([hi]))
    weights.append(np.array([0.5 * hi]))
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True, eq=False)
class NFunctionSpec:
    """Generator of an N-function plus its cached quadrature rule.

    Use the :func:`power`, :func:`hencky` and :func:`tabulated`
    constructors rather than building this directly.
    """

    kind: str
    param: float | None = None
    table_t: np.ndarray | None = None
    table_phi: np.ndarray | None = None
    quadrature_points: int = 8
    _nodes: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("power", "hencky", "tabulated"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if int(self.quadrature_points) < 1:
            raise ValueError("quadrature_points must be a positive integer")
        if self.kind in ("power", "hencky"):
            if self.param is None or not np.isfinite(self.param) or self.param <= 1.0:
                raise ValueError(f"{self.kind} generator needs a parameter > 1, got {self.param}")
        else:
            t = np.asarray(self.table_t, dtype=float)
            v = np.asarray(self.table_phi, dtype=float)
            if t.ndim != 1 or t.shape != v.shape or t.size < 2:
                raise ValueError("tabulated generator needs two equal-length 1-D arrays (>= 2 rows)")
            if np.any(t <= 0) or np.any(np.diff(t) <= 0):
                raise ValueError("tabulated t values must be positive and strictly increasing")
            if np.any(v <= 0) or np.any(np.diff(v) <= 0):
                raise ValueError("tabulated phi values must be positive and strictly increasing")
            t = t.copy()
            v = v.copy()
            t.setflags(write=False)
            v.setflags(write=False)
            object.__setattr__(self, "table_t", t)
            object.__setattr__(self, "table_phi", v)
        nodes, weights = _graded_rule(int(self.quadrature_points))
        object.__setattr__(self, "_nodes", nodes)
        object.__setattr__(self, "_weights", weights)

    @property
    def t_max(self) -> float:
        return float(self.table_t[-1]) if self.kind == "tabulated" else np.inf

    def label(self) -> str:
        if self.kind == "tabulated":
            return f"tabulated({self.table_t.size} rows)"
        return f"{self.kind}({kvtext.fmt_float(self.param)})"

    def _phi_abs(self, a: np.ndarray) -> np.ndarray:
        if self.kind == "power":
            return a ** (self.param - 1.0)
        if self.kind == "hencky":
            gamma = self.param
            s = np.sqrt(1.0 + a * a)
            # sqrt(1 + a^2) - 1 without cancellation
            d = a * a / (s + 1.0)
            return gamma * d ** (gamma - 1.0) / s * a
        return self._phi_table(a)

    def _phi_table(self, a: np.ndarray) -> np.ndarray:
        t, v = self.table_t, self.table_phi
        if np.any(a > t[-1] * (1.0 + 1e-12)):
            bad = float(np.max(a))
            raise RangeError(f"tabulated generator queried at {bad:.6g} > table maximum {t[-1]:.6g}")
        lt, lv = np.log(t), np.log(v)
        out = np.zeros_like(a)
        pos = a > 0
        la = np.log(a[pos])
        inner = np.interp(la, lt, lv)
        # below the first row: continue the first log-log segment down to 0
        slope0 = (lv[1] - lv[0]) / (lt[1] - lt[0])
        below = la < lt[0]
        inner[below] = lv[0] + slope0 * (la[below] - lt[0])
        out[pos] = np.exp(inner)
        return out


def power(p: float, quadrature_points: int = 8) -> NFunctionSpec:
    """phi(t) = |t|^(p-2) t."""
    return NFunctionSpec("power", float(p), quadrature_points=quadrature_points)


def hencky(gamma: float, quadrature_points: int = 8) -> NFunctionSpec:
    """phi(t) = a(t^2) t with a(s) = gamma (sqrt(1+s)-1)^(gamma-1) / sqrt(1+s)."""
    return NFunctionSpec("hencky", float(gamma), quadrature_points=quadrature_points)


def tabulated(t, phi, quadrature_points: int = 8) -> NFunctionSpec:
    return NFunctionSpec(
        "tabulated",
        table_t=np.asarray(t, dtype=float),
        table_phi=np.asarray(phi, dtype=float),
        quadrature_points=quadrature_points,
    )


def load_tabulated(path) -> NFunctionSpec:
    """Read a two-column ``t value`` file (``#`` comments allowed)."""
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two columns, got {raw!r}")
        rows.append((float(parts[0]), float(parts[1])))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows)
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise ValueError(f"{path}: t column must be strictly increasing")
    return tabulated(arr[:, 0], arr[:, 1])


def save_tabulated(spec: NFunctionSpec, path) -> None:
    lines = [f"{kvtext.fmt_float(t)} {kvtext.fmt_float(v)}" for t, v in zip(spec.table_t, spec.table_phi)]
    Path(path).write_text("\n".join(lines) + "\n")


def _result(x, scalar):
    return float(x) if scalar else x


def eval_phi(spec: NFunctionSpec, t):
    """phi(t), odd-extended to negative arguments."""
    t = np.asarray(t, dtype=float)
    val = spec._phi_abs(np.abs(t))
    return _result(np.where(t < 0, -val, val), t.ndim == 0)


def eval_big_phi(spec: NFunctionSpec, t):
    """Phi(t) = int_0^|t| phi(s) ds by the graded rule."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    vals = spec._phi_abs(a[..., None] * spec._nodes) @ spec._weights
    return _result(a * vals, t.ndim == 0)


def _invert_increasing(fun, s: np.ndarray) -> np.ndarray:
    """Solve fun(t) = s for t > 0, s > 0 (elementwise, fun increasing, fun(0)=0).

    Geometric bisection after a doubling/halving bracket search.
    """
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    if not np.any(pos):
        return out
    target = s[pos]
    lo = np.ones_like(target)
    hi = np.ones_like(target)
    f1 = fun(lo)
    up = f1 < target
    # grow upward
    while np.any(up):
        hi[up] *= 2.0
        if np.any(hi[up] > 1e300):
            raise UnboundedError("bracket growth exceeded the overflow guard (1e300)")
        still = fun(hi[up]) < target[up]
        idx = np.flatnonzero(up)
        up[idx[~still]] = False
    grown = hi > 1.0
    lo[grown] = hi[grown] / 2.0
    down = f1 > target
    while np.any(down):
        lo[down] *= 0.5
        if np.any(lo[down] < 1e-300):
            lo[down & (lo < 1e-300)] = 0.0
            break
        still = fun(lo[down]) > target[down]
        idx = np.flatnonzero(down)
        down[idx[~still]] = False
    shrunk = lo < 1.0
    hi[shrunk] = np.where(lo[shrunk] > 0, lo[shrunk] * 2.0, hi[shrunk])
    for _ in range(64):
        mid = np.where(lo > 0, np.sqrt(lo * hi), 0.5 * hi)
        fm = fun(mid)
        below = fm < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    flo, fhi = fun(lo), fun(hi)
    out[pos] = np.where(np.abs(flo - target) <= np.abs(fhi - target), lo, hi)
    return out


def phi_inverse(spec: NFunctionSpec, s):
    """t with phi(t) = s, odd-extended."""
    s = np.asarray(s, dtype=float)
    t = _invert_increasing(spec._phi_abs, np.abs(s).ravel()).reshape(s.shape)
    return _result(np.where(s < 0, -t, t), s.ndim == 0)


def big_phi_inverse(spec: NFunctionSpec, s):
    """t >= 0 with Phi(t) = s, for s >= 0."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("Phi^{-1} is only defined for s >= 0")
    t = _invert_increasing(lambda a: eval_big_phi(spec, a), s.ravel()).reshape(s.shape)
    return _result(t, s.ndim == 0)


def complementary_value(spec: NFunctionSpec, s):
    """Phi*(s) = int_0^|s| phi^{-1}(r) dr."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    inv = phi_inverse(spec, a[..., None] * spec._nodes)
    return _result(a * (np.asarray(inv) @ spec._weights), s.ndim == 0)


def complementary(spec: NFunctionSpec, t_grid=None) -> NFunctionSpec:
    """N-function spec generated by phi^{-1}.

    power(p) maps to power(p/(p-1)) exactly.  Other generators become a
    tabulated spec sampled at (phi(t_j), t_j), which is exact at the rows.
    """
    if spec.kind == "power":
        p = spec.param
        return power(p / (p - 1.0), spec.quadrature_points)
    if spec.kind == "tabulated":
        return tabulated(spec.table_phi, spec.table_t, spec.quadrature_points)
    if t_grid is None:
        t_grid = np.logspace(-8, 8, 801)
    t_grid = np.asarray(t_grid, dtype=float)
    return tabulated(eval_phi(spec, t_grid), t_grid, spec.quadrature_points)


def index_bounds(spec: NFunctionSpec, t_grid=None) -> tuple[float, float]:
    """(min, max) of t phi(t) / Phi(t) over a positive grid."""
    t = np.asarray(DEFAULT_INDEX_GRID if t_grid is None else t_grid, dtype=float)
    if t.size == 0 or np.any(t <= 0):
        raise ValueError("index grid must be nonempty and strictly positive")
    big = eval_big_phi(spec, t)
    if np.any(big <= 0):
        bad = t[np.argmax(big <= 0)]
        raise DegenerateGeneratorError(f"Phi({bad:.6g}) = 0 at a positive argument")
    ratio = t * eval_phi(spec, t) / big
    return float(ratio.min()), float(ratio.max())


def delta2_constant(spec: NFunctionSpec, t_grid=None, t0: float = 1.0) -> float:
    """Smallest k with Phi(2t) <= k Phi(t) on the sampled t >= t0."""
    t = np.asarray(DEFAULT_INDEX_GRID if t_grid is None else t_grid, dtype=float)
    t = t[t >= t0]
    if t.size == 0:
        raise ValueError("no grid points at or above t0")
    return float(np.max(eval_big_phi(spec, 2.0 * t) / eval_big_phi(spec, t)))


def _modular(spec, a, w, k):
    return float(np.dot(w, eval_big_phi(spec, a / k)))


def luxemburg_norm(values, weights, spec: NFunctionSpec) -> float:
    """inf{k > 0 : sum_i w_i Phi(|v_i| / k) <= 1}.

    The field is first normalized by its max entry, so scaling the input by
    a power of two scales the result exactly.
    """
    v = np.abs(np.asarray(values, dtype=float)).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if v.shape != w.shape:
        raise ValueError(f"values and weights differ in length ({v.size} vs {w.size})")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if not w.sum() > 0:
        raise ValueError("weights must have positive sum")
    scale = v.max() if v.size else 0.0
    if scale == 0.0:
        return 0.0
    a = v / scale

    def excess(logk):
        return _modular(spec, a, w, np.exp(logk)) - 1.0

    lo, hi = 0.0, 0.0
    while excess(hi) > 0:
        hi += 2.0
        if hi > 700:
            raise UnboundedError("Luxemburg bracket overflow")
    while excess(lo) < 0:
        lo -= 2.0
        if lo < -700:
            raise UnboundedError("Luxemburg bracket underflow")
    if lo == hi:
        return float(scale * np.exp(lo))
    logk = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(scale * np.exp(logk))


@dataclass
class ComparisonReport:
    mode: str
    verdict: str  # pass | fail | inconclusive
    k: float | None
    witness_t: float | None
    witness_ratio: float | None
    t0: float
    detail: str = ""

    def to_kv(self) -> str:
        return kvtext.dumps(
            {
                "mode": self.mode,
                "verdict": self.verdict,
                "k": self.k,
                "witness_t": self.witness_t,
                "witness_ratio": self.witness_ratio,
                "t0": self.t0,
                "detail": self.detail,
            }
        )


def growth_compare(spec_a, spec_b, mode: str, t_grid=None, scales=None, t0: float = 1.0,
                   decay: float = 1e-3) -> ComparisonReport:
    """Sampled check of ``Phi_A(t) <= Phi_B(k t)`` (mode ``dominates``) or of
    ``Phi_A(t) / Phi_B(k t) -> 0`` for every k (mode ``essentially_faster``).

    ``essentially_faster`` passes when, for every scale, the ratio never
    increases along the grid and its final value is at most ``decay`` times
    the first.  A non-increasing ratio that decays less is inconclusive; a
    ratio that does not decrease at all fails.
    """
    t = np.asarray(DEFAULT_GROWTH_GRID if t_grid is None else t_grid, dtype=float)
    t = t[t >= t0]
    ks = np.asarray(DEFAULT_SCALES if scales is None else scales, dtype=float)
    if t.size < 3:
        raise ValueError("growth probe needs at least 3 grid points at or above t0")
    phi_a = eval_big_phi(spec_a, t)
    if mode == "dominates":
        worst_t, worst_ratio = None, None
        for k in ks:
            ratio = phi_a / eval_big_phi(spec_b, k * t)
            if np.all(ratio <= 1.0):
                return ComparisonReport(mode, "pass", float(k), None, float(ratio.max()), t0)
            j = int(np.argmax(ratio))
            worst_t, worst_ratio = float(t[j]), float(ratio[j])
        return ComparisonReport(mode, "fail", float(ks[-1]), worst_t, worst_ratio, t0,
                                "no sampled scale k keeps Phi_A(t) <= Phi_B(kt)")
    if mode == "essentially_faster":
        verdict = "pass"
        for k in ks:
            ratio = phi_a / eval_big_phi(spec_b, k * t)
            rises = np.diff(ratio) > 1e-12 * ratio[:-1]
            if ratio[-1] >= ratio[0] * (1.0 - 1e-9):
                return ComparisonReport(mode, "fail", float(k), float(t[-1]), float(ratio[-1]), t0,
                                        "sampled ratio does not decrease")
            if np.any(rises) or ratio[-1] > decay * ratio[0]:
                verdict = "inconclusive"
                witness = (float(k), float(t[-1]), float(ratio[-1]))
        if verdict == "inconclusive":
            k, wt, wr = witness
            return ComparisonReport(mode, verdict, k, wt, wr, t0, "ratio trend not clearly toward 0")
        return ComparisonReport(mode, "pass", None, None, None, t0)
    raise ValueError(f"unknown comparison mode {mode!r}")


@dataclass
class IndexReport:
    lower: float
    upper: float
    conj_lower: float
    conj_upper: float
    standard_gap: float  # max deviation of the standard conjugate pairing
    literal_gap: float  # deviation of the printed variant with phi^+ twice
    supported: str

    def to_kv(self) -> str:
        return kvtext.dumps(self.__dict__)


def conjugate_index_report(spec: NFunctionSpec, t_grid=None, s_grid=None) -> IndexReport:
    """Compare the indices of phi and phi^{-1}.

    Standard pairing: 1/(phi^{-1})^- + 1/phi^+ = 1 and 1/(phi^{-1})^+ + 1/phi^- = 1.
    The literal variant pairs both conjugate indices with phi^+.
    """
    lo, hi = index_bounds(spec, t_grid)
    conj = complementary(spec)
    if s_grid is None:
        if conj.kind == "tabulated":
            s_grid = np.logspace(np.log10(conj.table_t[0]) + 1, np.log10(conj.table_t[-1]) - 1, 121)
        else:
            s_grid = DEFAULT_INDEX_GRID
    clo, chi = index_bounds(conj, s_grid)
    standard = max(abs(1 / clo + 1 / hi - 1), abs(1 / chi + 1 / lo - 1))
    literal = max(abs(1 / clo + 1 / hi - 1), abs(1 / chi + 1 / hi - 1))
    if standard <= literal:
        supported = "standard" if literal > standard + 1e-9 else "both"
    else:
        supported = "literal"
    return IndexReport(lo, hi, clo, chi, standard, literal, supported)


@dataclass
class SobolevConjugate:
    divergent: bool
    conjugate: NFunctionSpec | None
    classification: str  # divergent | logarithmic | convergent | inconclusive
    increments: np.ndarray
    ratios: np.ndarray
    lower_piece_modified: bool

    def to_kv(self) -> str:
        return kvtext.dumps(
            {
                "divergent": self.divergent,
                "classification": self.classification,
                "limit_case": self.classification == "logarithmic",
                "increments": self.increments,
                "ratios": self.ratios,
                "lower_piece_modified": self.lower_piece_modified,
                "conjugate": None if self.conjugate is None else self.conjugate.label(),
            }
        )


_GL16 = np.polynomial.legendre.leggauss(16)


def _log_integral(fun, a: float, b: float) -> float:
    """int_a^b fun(s) ds with s = exp(y), 16-point Gauss-Legendre in y."""
    x, w = _GL16
    ya, yb = np.log(a), np.log(b)
    y = 0.5 * (ya + yb) + 0.5 * (yb - ya) * x
    s = np.exp(y)
    return float(0.5 * (yb - ya) * np.dot(w, fun(s) * s))


def sobolev_conjugate(spec: NFunctionSpec, N: int, tau_grid=None) -> SobolevConjugate:
    """Probe divergence of int_1^inf Phi^{-1}(s) / s^((N+1)/N) ds and, when it
    diverges, tabulate the Sobolev conjugate as the inverse of
    t -> int_0^t Phi^{-1}(s) / s^((N+1)/N) ds.

    Divergence is decided from the decade increments D_k = int_{10^k}^{10^(k+1)},
    k = 2..7: geometric contraction (all successive ratios <= 0.9) means
    convergent; ratios all >= 0.95 mean divergent, flagged ``logarithmic``
    when they stay within [0.95, 1.05].
    """
    if int(N) < 2:
        raise ValueError("dimension N must be >= 2")
    N = int(N)
    expo = (N + 1.0) / N

    def integrand(s):
        return big_phi_inverse(spec, s) / s ** expo

    inc = np.array([_log_integral(integrand, 10.0 ** k, 10.0 ** (k + 1)) for k in range(2, 8)])
    ratios = inc[1:] / inc[:-1]
    if np.all(ratios >= 0.95):
        cls = "logarithmic" if np.all(ratios <= 1.05) else "divergent"
    elif np.all(ratios <= 0.9):
        cls = "convergent"
    else:
        cls = "inconclusive"
    divergent = cls in ("divergent", "logarithmic")
    if not divergent:
        return SobolevConjugate(False, None, cls, inc, ratios, False)

    # lower piece int_0^1: finite iff Phi^{-1}(s) s^{-1/N} -> 0 (log variable)
    small = np.array([1e-12, 1e-10])
    g = big_phi_inverse(spec, small) * small ** (-1.0 / N)
    beta = np.log(g[1] / g[0]) / np.log(small[1] / small[0])
    modified = not beta > 1e-3
    if modified:
        c1 = big_phi_inverse(spec, 1.0)

        def inv_mod(s):
            s = np.asarray(s, dtype=float)
            return np.where(s <= 1.0, c1 * s, big_phi_inverse(spec, np.maximum(s, 1.0)))
    else:
        def inv_mod(s):
            return big_phi_inverse(spec, s)

    tau = np.asarray(np.logspace(-10, 10, 401) if tau_grid is None else tau_grid, dtype=float)
    g0 = float(inv_mod(tau[0])) * tau[0] ** (-1.0 / N)
    if modified and tau[0] <= 1.0:
        head = c1 * tau[0] ** (1.0 - 1.0 / N) / (1.0 - 1.0 / N)
    else:
        head = g0 / beta
    pieces = [_log_integral(lambda s: inv_mod(s) / s ** expo, a, b) for a, b in zip(tau[:-1], tau[1:])]
    big_t = head + np.concatenate([[0.0], np.cumsum(pieces)])
    phi_star = tau ** expo / inv_mod(tau)
    keep = np.concatenate([[True], (np.diff(big_t) > 0) & (np.diff(phi_star) > 0)])
    conj = tabulated(big_t[keep], phi_star[keep], spec.quadrature_points)
    return SobolevConjugate(True, conj, cls, inc, ratios, bool(modified))
