"""Closed convex constraint sets with Euclidean projection and sampling."""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

FEAS_TOL = 1e-9


class EmptySetError(ValueError):
    """The set (typically a halfspace intersection) has no points."""


def _dykstra(x, projectors, tol=1e-12, max_iter=20000):
    x = np.array(x, dtype=float)
    incr = [np.zeros_like(x) for _ in projectors]
    for _ in range(max_iter):
        x_old = x.copy()
        for i, proj in enumerate(projectors):
            y = proj(x + incr[i])
            incr[i] = x + incr[i] - y
            x = y
        if np.linalg.norm(x - x_old) <= tol * max(1.0, np.linalg.norm(x)):
            break
    return x


class ConvexSet:
    """Nonempty closed convex subset of R^dim.

    Variants: ``whole_space``, ``box``, ``ball``, ``weighted_linf``,
    ``halfspaces``, ``product`` and ``intersection`` (the latter is what
    :meth:`restrict_to_ball` builds for non-simple sets).
    """

    def __init__(self, variant: str, dim: int, **data):
        self.variant = variant
        self.dim = int(dim)
        self.data = data
        if self.dim < 1:
            raise ValueError("set dimension must be positive")
        self.witness = self._find_witness()
        self.witness.setflags(write=False)

    def __repr__(self):
        return f"ConvexSet({self.variant}, dim={self.dim})"

    # -- construction helpers -------------------------------------------------
    def _find_witness(self) -> np.ndarray:
        v, d = self.variant, self.data
        if v == "whole_space":
            return np.zeros(self.dim)
        if v == "box":
            return 0.5 * (d["lower"] + d["upper"])
        if v == "ball":
            return d["center"].copy()
        if v == "weighted_linf":
            return np.zeros(self.dim)
        if v == "halfspaces":
            res = linprog(np.zeros(self.dim), A_ub=d["normals"], b_ub=d["offsets"],
                          bounds=[(None, None)] * self.dim, method="highs")
            if res.status != 0:
                raise EmptySetError("halfspace intersection is empty")
            return self.project(res.x)
        if v == "product":
            return np.concatenate([d["first"].witness, d["second"].witness])
        if v == "intersection":
            x = _dykstra(np.zeros(self.dim), [s.project for s in d["parts"]])
            if not all(s.contains(x, 1e-7) for s in d["parts"]):
                raise EmptySetError("intersection is empty")
            return x
        raise ValueError(f"unknown set variant {v!r}")

    # -- queries --------------------------------------------------------------
    @property
    def is_bounded(self) -> bool:
        v = self.variant
        if v in ("box", "ball", "weighted_linf"):
            return True
        if v == "product":
            return self.data["first"].is_bounded and self.data["second"].is_bounded
        if v == "intersection":
            return any(s.is_bounded for s in self.data["parts"])
        return False

    def contains(self, x, tol: float = FEAS_TOL):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"point of length {x.shape[-1]} for a set of dim {self.dim}")
        v, d = self.variant, self.data
        if v == "whole_space":
            ok = np.all(np.isfinite(x), axis=-1)
        elif v == "box":
            ok = np.all((x >= d["lower"] - tol) & (x <= d["upper"] + tol), axis=-1)
        elif v == "ball":
            ok = np.linalg.norm(x - d["center"], axis=-1) <= d["radius"] + tol
        elif v == "weighted_linf":
            ok = np.all(np.abs(x) <= d["bounds"] + tol, axis=-1)
        elif v == "halfspaces":
            ok = np.all(x @ d["normals"].T <= d["offsets"] + tol, axis=-1)
        elif v == "product":
            k = d["first"].dim
            ok = np.logical_and(d["first"].contains(x[..., :k], tol), d["second"].contains(x[..., k:], tol))
        else:
            ok = np.all([s.contains(x, tol) for s in d["parts"]], axis=0)
        return bool(ok) if np.ndim(ok) == 0 else ok

    def project(self, x) -> np.ndarray:
        """Euclidean projection; accepts a single point or a batch (..., dim)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"point of length {x.shape[-1]} for a set of dim {self.dim}")
        v, d = self.variant, self.data
        if v == "whole_space":
            return x.copy()
        if v == "box":
            return np.clip(x, d["lower"], d["upper"])
        if v == "ball":
            diff = x - d["center"]
            nrm = np.linalg.norm(diff, axis=-1, keepdims=True)
            scale = np.where(nrm > d["radius"], d["radius"] / np.where(nrm > 0, nrm, 1.0), 1.0)
            return d["center"] + diff * scale
        if v == "weighted_linf":
            return np.clip(x, -d["bounds"], d["bounds"])
        if v == "product":
            k = d["first"].dim
            return np.concatenate([d["first"].project(x[..., :k]), d["second"].project(x[..., k:])], axis=-1)
        if x.ndim > 1:
            flat = x.reshape(-1, self.dim)
            return np.array([self.project(row) for row in flat]).reshape(x.shape)
        if self.contains(x, 0.0):
            return x.copy()
        if v == "halfspaces":
            normals, offsets = d["normals"], d["offsets"]
            projectors = [_halfspace_projector(a, b) for a, b in zip(normals, offsets)]
        else:
            projectors = [s.project for s in d["parts"]]
        y = _dykstra(x, projectors)
        if not self.contains(y, FEAS_TOL):
            raise EmptySetError("alternating projection did not reach a feasible point")
        return y

    def bounding_box(self, radius: float = 1.0):
        """Axis-aligned box containing the set (or its part within ``radius`` of 0)."""
        v, d = self.variant, self.data
        if v == "box":
            return d["lower"].copy(), d["upper"].copy()
        if v == "ball":
            return d["center"] - d["radius"], d["center"] + d["radius"]
        if v == "weighted_linf":
            return -d["bounds"], d["bounds"].copy()
        if v == "product":
            lo1, hi1 = d["first"].bounding_box(radius)
            lo2, hi2 = d["second"].bounding_box(radius)
            return np.concatenate([lo1, lo2]), np.concatenate([hi1, hi2])
        if v == "intersection":
            boxes = [s.bounding_box(radius) for s in d["parts"] if s.is_bounded]
            if boxes:
                return np.max([b[0] for b in boxes], axis=0), np.min([b[1] for b in boxes], axis=0)
        return np.full(self.dim, -float(radius)), np.full(self.dim, float(radius))

    def sample(self, rng: np.random.Generator, count: int, radius: float = 1.0) -> np.ndarray:
        """``count`` feasible points: uniform in the bounding box, then projected."""
        lo, hi = self.bounding_box(radius)
        pts = lo + (hi - lo) * rng.random((int(count), self.dim))
        if self.variant == "ball":
            # uniform in the ball instead of projecting the box onto its surface
            g = rng.standard_normal((int(count), self.dim))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            r = self.data["radius"] * rng.random((int(count), 1)) ** (1.0 / self.dim)
            return self.data["center"] + g * r
        return self.project(pts)

    def extremes(self, radius: float = 1.0, max_points: int = 64) -> np.ndarray:
        """Deterministic boundary points: box corners when few enough, else
        the witness pushed to each coordinate extreme."""
        lo, hi = self.bounding_box(radius)
        if 2 ** self.dim <= max_points:
            corners = np.array(list(itertools.product(*zip(lo, hi))), dtype=float)
        else:
            base = self.witness
            corners = []
            for i in range(self.dim):
                for val in (lo[i], hi[i]):
                    p = base.copy()
                    p[i] = val
                    corners.append(p)
            corners = np.array(corners)
        return self.project(corners)

    def restrict_to_ball(self, radius: float) -> "ConvexSet":
        """Intersection with the closed ball of given radius about the origin."""
        if self.variant == "whole_space":
            return ball(np.zeros(self.dim), radius)
        return ConvexSet("intersection", self.dim, parts=[self, ball(np.zeros(self.dim), radius)])

    def describe(self) -> dict:
        v, d = self.variant, self.data
        out = {"type": v, "dim": self.dim}
        if v == "box":
            out.update(lower=d["lower"], upper=d["upper"])
        elif v == "ball":
            out.update(center=d["center"], radius=d["radius"])
        elif v == "weighted_linf":
            out.update(bounds=d["bounds"])
        elif v == "halfspaces":
            out.update(normals=d["normals"], offsets=d["offsets"])
        return out


def _halfspace_projector(a, b):
    aa = float(a @ a)

    def proj(x):
        viol = a @ x - b
        return x - (viol / aa) * a if viol > 0 else x

    return proj


def whole_space(dim: int) -> ConvexSet:
    return ConvexSet("whole_space", dim)


def box(lower, upper) -> ConvexSet:
    lower = np.atleast_1d(np.asarray(lower, dtype=float)).copy()
    upper = np.atleast_1d(np.asarray(upper, dtype=float)).copy()
    if lower.shape != upper.shape:
        raise ValueError("box bounds differ in length")
    if np.any(lower > upper):
        raise ValueError("box requires lower <= upper")
    return ConvexSet("box", lower.size, lower=lower, upper=upper)


def ball(center, radius: float) -> ConvexSet:
    center = np.atleast_1d(np.asarray(center, dtype=float)).copy()
    if not radius >= 0:
        raise ValueError("ball radius must be nonnegative")
    return ConvexSet("ball", center.size, center=center, radius=float(radius))


def weighted_linf(bounds) -> ConvexSet:
    """{x : |x_i| <= bounds_i}."""
    bounds = np.atleast_1d(np.asarray(bounds, dtype=float)).copy()
    if np.any(bounds < 0):
        raise ValueError("weighted_linf bounds must be >= 0")
    return ConvexSet("weighted_linf", bounds.size, bounds=bounds)


def halfspaces(normals, offsets) -> ConvexSet:
    """{x : normals @ x <= offsets}."""
    normals = np.atleast_2d(np.asarray(normals, dtype=float)).copy()
    offsets = np.atleast_1d(np.asarray(offsets, dtype=float)).copy()
    if normals.shape[0] != offsets.size:
        raise ValueError("one offset per normal required")
    if np.any(np.linalg.norm(normals, axis=1) == 0):
        raise ValueError("zero normal vector")
    return ConvexSet("halfspaces", normals.shape[1], normals=normals, offsets=offsets)


def product(first: ConvexSet, second: ConvexSet) -> ConvexSet:
    return ConvexSet("product", first.dim + second.dim, first=first, second=second)
