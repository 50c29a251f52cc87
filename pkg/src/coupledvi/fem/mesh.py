"""Triangle meshes with labelled boundary parts (1 clamped, 2 loaded, 3 contact).

File format (blank lines and ``#`` comments ignored)::

    NODES
    <id> <x> <y>
    TRIANGLES
    <id> <n1> <n2> <n3>
    BOUNDARY
    <n1> <n2> <label>
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

from .. import kvtext

LABELS = (1, 2, 3)


class MeshError(ValueError):
    """Invalid mesh file or topology; the message names the offending line."""


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (T, 3), counter-clockwise
    boundary_edges: np.ndarray  # (E, 2)
    boundary_labels: np.ndarray  # (E,)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(T, 3, 2) gradients of the three hat functions on each triangle."""
        p = self.nodes[self.triangles]
        # grad of hat k is the rotated opposite edge over twice the area
        opp = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        rot = np.stack([-opp[..., 1], opp[..., 0]], axis=-1)
        return rot / (2.0 * self.areas)[:, None, None]

    @cached_property
    def scatter(self) -> sparse.csr_matrix:
        """(N, 3T) matrix summing per-triangle-vertex values into nodes."""
        T = len(self.triangles)
        cols = np.arange(3 * T)
        return sparse.csr_matrix((np.ones(3 * T), (self.triangles.ravel(), cols)), shape=(self.num_nodes, 3 * T))

    @cached_property
    def node_areas(self) -> np.ndarray:
        """Lumped mass: a third of each adjacent triangle's area."""
        return self.scatter @ np.repeat(self.areas / 3.0, 3)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        p = self.nodes[self.boundary_edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    def part_nodes(self, label: int) -> np.ndarray:
        return np.unique(self.boundary_edges[self.boundary_labels == label])

    def part_length(self, label: int) -> float:
        return float(self.edge_lengths[self.boundary_labels == label].sum())

    def boundary_mass(self, label: int) -> np.ndarray:
        """Per-node half lengths of the adjacent edges of one part (length N)."""
        sel = self.boundary_labels == label
        out = np.zeros(self.num_nodes)
        half = 0.5 * self.edge_lengths[sel]
        np.add.at(out, self.boundary_edges[sel, 0], half)
        np.add.at(out, self.boundary_edges[sel, 1], half)
        return out

    @cached_property
    def dirichlet_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_nodes, dtype=bool)
        mask[self.part_nodes(1)] = True
        return mask

    @cached_property
    def free_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet_mask)

    def gradients(self, u) -> np.ndarray:
        """Constant gradient per triangle; u may carry leading batch axes."""
        u = np.asarray(u, dtype=float)
        return np.einsum("...tk,tkd->...td", u[..., self.triangles], self.basis_gradients)


def _validate(nodes, tris, edges, labels, where=lambda i: "") -> Mesh:
    n = len(nodes)
    if n == 0 or len(tris) == 0:
        raise MeshError("mesh needs at least one node and one triangle")
    if tris.min() < 0 or tris.max() >= n:
        raise MeshError("triangle references an unknown node")
    tris = tris.copy()
    p = nodes[tris]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    if np.any(cross == 0):
        raise MeshError(f"degenerate triangle{where(int(np.flatnonzero(cross == 0)[0]))}")
    flip = cross < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    count = Counter()
    for t in tris:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            count[(min(a, b), max(a, b))] += 1
    bad = [e for e, c in count.items() if c > 2]
    if bad:
        raise MeshError(f"non-manifold edge {bad[0]} shared by {count[bad[0]]} triangles")
    outer = {e for e, c in count.items() if c == 1}

    bad_label = np.flatnonzero(~np.isin(labels, LABELS))
    if bad_label.size:
        i = int(bad_label[0])
        raise MeshError(f"boundary label {labels[i]} not in {{1,2,3}}{where(i, 'b')}")
    seen = set()
    for i, (a, b) in enumerate(edges):
        key = (min(a, b), max(a, b))
        if key not in outer:
            raise MeshError(f"edge {a}-{b} is not a boundary edge{where(i, 'b')}")
        if key in seen:
            raise MeshError(f"edge {a}-{b} labelled twice{where(i, 'b')}")
        seen.add(key)
    missing = outer - seen
    if missing:
        a, b = sorted(missing)[0]
        raise MeshError(f"unlabelled boundary edge {a}-{b}")
    deg = Counter(edges.ravel().tolist())
    if any(d != 2 for d in deg.values()):
        raise MeshError("boundary edges do not form closed loops")
    for lab in LABELS:
        if not np.any(labels == lab):
            raise MeshError(f"boundary part {lab} has no edges")
    return Mesh(nodes, tris, edges, labels)


def _parse_ints(tokens, lineno, count):
    if len(tokens) != count:
        raise MeshError(f"line {lineno}: expected {count} fields, got {len(tokens)}")
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise MeshError(f"line {lineno}: non-integer field in {' '.join(tokens)!r}") from None


def load_mesh(path) -> Mesh:
    section = None
    node_ids, coords, tris, edges, labels = [], [], [], [], []
    tri_lines, edge_lines = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.upper() in ("NODES", "TRIANGLES", "BOUNDARY"):
            section = line.upper()
            continue
        tok = line.split()
        if section is None:
            raise MeshError(f"line {lineno}: data before any section header")
        if section == "NODES":
            if len(tok) != 3:
                raise MeshError(f"line {lineno}: expected 'id x y'")
            try:
                node_ids.append(int(tok[0]))
                coords.append((float(tok[1]), float(tok[2])))
            except ValueError:
                raise MeshError(f"line {lineno}: malformed node {line!r}") from None
        elif section == "TRIANGLES":
            tris.append(_parse_ints(tok, lineno, 4)[1:])
            tri_lines.append(lineno)
        else:
            a, b, lab = _parse_ints(tok, lineno, 3)
            edges.append((a, b))
            labels.append(lab)
            edge_lines.append(lineno)
    if len(set(node_ids)) != len(node_ids):
        raise MeshError("duplicate node id")
    index = {nid: i for i, nid in enumerate(node_ids)}

    def remap(rows, lines, kind):
        out = []
        for row, ln in zip(rows, lines):
            try:
                out.append([index[v] for v in row])
            except KeyError as exc:
                raise MeshError(f"line {ln}: {kind} references unknown node {exc.args[0]}") from None
        return np.array(out, dtype=int).reshape(-1, len(rows[0]) if rows else 0)

    T = remap(tris, tri_lines, "triangle")
    E = remap(edges, edge_lines, "boundary edge").reshape(-1, 2)

    def where(i, kind="t"):
        ln = (edge_lines if kind == "b" else tri_lines)[i]
        return f" (line {ln})"

    return _validate(np.array(coords, dtype=float).reshape(-1, 2), T, E, np.array(labels, dtype=int), where)


def save_mesh(mesh: Mesh, path) -> None:
    lines = ["NODES"]
    lines += [f"{i} {kvtext.fmt_float(x)} {kvtext.fmt_float(y)}" for i, (x, y) in enumerate(mesh.nodes)]
    lines.append("TRIANGLES")
    lines += [f"{i} {a} {b} {c}" for i, (a, b, c) in enumerate(mesh.triangles)]
    lines.append("BOUNDARY")
    lines += [f"{a} {b} {lab}" for (a, b), lab in zip(mesh.boundary_edges, mesh.boundary_labels)]
    Path(path).write_text("\n".join(lines) + "\n")


def unit_square_mesh(n: int, left: int = 1, top: int = 2, right: int = 2, bottom: int = 3) -> Mesh:
    """Structured n x n square split along the rising diagonal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return j * (n + 1) + i

    tris, edges, labels = [], [], []
    for j in range(n):
        for i in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris += [(a, b, c), (a, c, d)]
    for i in range(n):
        edges += [(idx(i, 0), idx(i + 1, 0)), (idx(n, i), idx(n, i + 1)),
                  (idx(i + 1, n), idx(i, n)), (idx(0, i + 1), idx(0, i))]
        labels += [bottom, right, top, left]
    return _validate(nodes, np.array(tris), np.array(edges), np.array(labels))
