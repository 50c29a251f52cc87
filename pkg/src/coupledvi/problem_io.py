"""Problem files: INI-style sections describing a coupled system.

Example::

    [dims]
    n = 1
    m = 1

    [K]
    type = box
    lower = -1
    upper = 1

    [Lambda]
    type = box
    lower = -1
    upper = 1

    [B]
    kind = bilinear        # B(u, lam) = lam^T M u, M is m x n
    matrix = 1

    [chi]
    kind = bilinear        # zero | bilinear | operator_linear | convex_difference
    matrix = 1

    [psi]
    kind = zero

    [data]
    f = 0.5
    g = 0

Matrices are written inline (rows separated by ';') or read from a CSV file
named by ``matrix_file`` (relative to the problem file).  A ``[special]``
section with ``variant = SP`` and keys ``a``, ``b``, ``f`` builds the
saddle-point system instead; it then needs only a ``[Lambda]`` section.
"""
from __future__ import annotations

import configparser
from pathlib import Path

import numpy as np

from . import kvtext
from . import sets as cs
from . import system as sy


class ProblemFileError(ValueError):
    """Malformed problem file; the message names the section and key."""


def read_ini(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";;"), interpolation=None)
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ProblemFileError(str(exc)) from None
    return cp


def _get(cp, section, key, parse, default=None, required=True):
    if not cp.has_option(section, key):
        if required and default is None:
            raise ProblemFileError(f"[{section}] is missing key {key!r}")
        return default
    raw = cp.get(section, key)
    try:
        return parse(raw)
    except ValueError as exc:
        raise ProblemFileError(f"[{section}] {key} = {raw!r}: {exc}") from None


def _matrix(cp, section, base: Path, rows=None, cols=None):
    if cp.has_option(section, "matrix_file"):
        path = base / cp.get(section, "matrix_file")
        try:
            M = np.loadtxt(path, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise ProblemFileError(f"[{section}] matrix_file {path}: {exc}") from None
    else:
        M = _get(cp, section, "matrix", kvtext.parse_matrix)
    if rows is not None and M.shape != (rows, cols):
        raise ProblemFileError(f"[{section}] matrix has shape {M.shape}, expected {(rows, cols)}")
    return M


def read_set(cp, section, dim) -> cs.ConvexSet:
    if not cp.has_section(section):
        raise ProblemFileError(f"missing section [{section}]")
    kind = cp.get(section, "type", fallback="whole_space").strip()
    vec = kvtext.parse_vector
    if kind == "whole_space":
        S = cs.whole_space(dim)
    elif kind == "box":
        S = cs.box(_get(cp, section, "lower", vec), _get(cp, section, "upper", vec))
    elif kind == "ball":
        S = cs.ball(_get(cp, section, "center", vec, np.zeros(dim)), _get(cp, section, "radius", float))
    elif kind == "weighted_linf":
        S = cs.weighted_linf(_get(cp, section, "bounds", vec))
    elif kind in ("halfspaces", "halfspace_intersection"):
        S = cs.halfspaces(_get(cp, section, "normals", kvtext.parse_matrix), _get(cp, section, "offsets", vec))
    else:
        raise ProblemFileError(f"[{section}] unknown set type {kind!r}")
    if S.dim != dim:
        raise ProblemFileError(f"[{section}] has dimension {S.dim}, expected {dim}")
    return S


_CONVEX_J = {
    "l1": lambda w: (lambda x: np.abs(x) @ w),
    "sqnorm": lambda w: (lambda x: 0.5 * (x * x) @ w),
}


def read_bifunction(cp, section, dim, base) -> sy.Bifunction:
    if not cp.has_section(section):
        return sy.zero_bifunction(dim)
    kind = cp.get(section, "kind", fallback="zero").strip()
    if kind == "zero":
        return sy.zero_bifunction(dim)
    if kind == "bilinear":
        return sy.bilinear_bifunction(_matrix(cp, section, base, dim, dim))
    if kind == "operator_linear":
        return sy.operator_linear(_matrix(cp, section, base, dim, dim))
    if kind == "convex_difference":
        name = cp.get(section, "J", fallback="l1").strip()
        if name not in _CONVEX_J:
            raise ProblemFileError(f"[{section}] J must be one of {sorted(_CONVEX_J)}")
        w = _get(cp, section, "weights", kvtext.parse_vector, np.ones(dim))
        if w.size != dim or np.any(w < 0):
            raise ProblemFileError(f"[{section}] weights must be {dim} nonnegative numbers")
        return sy.convex_difference(dim, _CONVEX_J[name](w))
    raise ProblemFileError(f"[{section}] unknown bifunction kind {kind!r}")


def read_coupling(cp, n, m, base) -> sy.Coupling:
    kind = cp.get("B", "kind", fallback="zero").strip() if cp.has_section("B") else "zero"
    if kind == "zero":
        return sy.zero_coupling(n, m)
    if kind == "bilinear":
        return sy.bilinear_coupling(_matrix(cp, "B", base, m, n))
    raise ProblemFileError(f"[B] unknown coupling kind {kind!r}")


def load_problem(path) -> sy.CoupledSystem:
    path = Path(path)
    cp = read_ini(path)
    base = path.parent
    vec = kvtext.parse_vector
    if cp.has_section("special"):
        variant = cp.get("special", "variant", fallback="").strip()
        if variant != "SP":
            raise ProblemFileError(f"[special] variant {variant!r} is not supported in files (only SP)")
        a = _get(cp, "special", "a", kvtext.parse_matrix)
        b = _get(cp, "special", "b", kvtext.parse_matrix)
        f = _get(cp, "special", "f", vec)
        Lam = read_set(cp, "Lambda", b.shape[0])
        try:
            sys = sy.build_special("SP", a=a, b=b, f=f, Lam=Lam)
        except ValueError as exc:
            raise ProblemFileError(f"[special] {exc}") from None
        sys.meta.update(a=a, b=b, source=str(path))
        return sys
    n = _get(cp, "dims", "n", int)
    m = _get(cp, "dims", "m", int)
    if n < 1 or m < 1:
        raise ProblemFileError("[dims] n and m must be positive")
    K = read_set(cp, "K", n)
    Lam = read_set(cp, "Lambda", m)
    B = read_coupling(cp, n, m, base)
    chi = read_bifunction(cp, "chi", n, base)
    psi = read_bifunction(cp, "psi", m, base)
    f = _get(cp, "data", "f", vec, np.zeros(n))
    g = _get(cp, "data", "g", vec, np.zeros(m))
    try:
        sys = sy.CoupledSystem(n, m, B, chi, psi, f, g, K, Lam, label=path.stem)
    except ValueError as exc:
        raise ProblemFileError(str(exc)) from None
    sys.meta["source"] = str(path)
    # remember the saddle-point data when the system has that shape
    if (chi.kind == "operator_linear" and B.kind == "bilinear" and psi.kind == "zero"
            and K.variant == "whole_space" and not np.any(sys.g)):
        sys.meta.update(a=chi.data["matrix"], b=B.data["matrix"])
    return sys
