"""Tensor networks on general (multi)graphs.

A :class:`TensorNetwork` holds one :class:`~tncond.tensor.DenseTensor` per
vertex. Every leg of every vertex tensor is either one end of a contracted
edge or an open leg; edges and open legs share one id namespace.

Ordering convention used everywhere: whenever legs identified by edge ids are
flattened (output of a contraction, rows/columns of an environment matrix,
``vec``), they are taken in sorted edge-id order. Environment matrices are
``N ⊗ I`` with ``N``'s legs first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import NetworkInvalid, TooLargeToMaterialize, ValidationError, VertexNotFound
from .tensor import (
    DEFAULT_CAP,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    DenseTensor,
    Matricization,
    contract_pair,
    dist_from_dict,
    frobenius_norm,
    kron,
    matricize,
    random_tensor,
    spectral_norm,
)


@dataclass(frozen=True)
class Edge:
    id: str
    a: tuple  # (vertex-id, leg-id)
    b: tuple


@dataclass(frozen=True)
class OpenLeg:
    id: str
    vertex: str
    leg: object


class TensorNetwork:
    """Immutable tensor network.

    Args:
        vertices: mapping (or pairs) vertex-id -> DenseTensor.
        edges: contracted edges between two distinct vertices.
        open_legs: uncontracted legs.
    """

    def __init__(self, vertices, edges: Iterable[Edge] = (), open_legs: Iterable[OpenLeg] = ()):
        items = list(vertices.items()) if isinstance(vertices, dict) else list(vertices)
        ids = [v for v, _ in items]
        if len(set(ids)) != len(ids):
            raise NetworkInvalid(f"duplicate vertex ids in {ids}")
        self._vertices = dict(items)
        self._edges = tuple(edges)
        self._open = tuple(open_legs)
        self._validate()
        # (vertex, leg) -> edge id
        self._leg_to_edge = {}
        for e in self._edges:
            self._leg_to_edge[tuple(e.a)] = e.id
            self._leg_to_edge[tuple(e.b)] = e.id
        for o in self._open:
            self._leg_to_edge[(o.vertex, o.leg)] = o.id

    def _validate(self):
        seen_ids = set()
        used = set()
        for e in self._edges:
            ends = [tuple(e.a), tuple(e.b)]
            if e.a[0] == e.b[0]:
                raise NetworkInvalid(f"edge {e.id!r} joins vertex {e.a[0]!r} to itself")
            dims = []
            for v, leg in ends:
                t = self._tensor_or_raise(v, e.id)
                if leg not in t.legs:
                    raise NetworkInvalid(f"edge {e.id!r}: vertex {v!r} has no leg {leg!r}")
                dims.append(t.dim(leg))
            if dims[0] != dims[1]:
                raise NetworkInvalid(f"edge {e.id!r} joins legs of dims {dims[0]} and {dims[1]}")
            self._claim(e.id, seen_ids, ends, used)
        for o in self._open:
            t = self._tensor_or_raise(o.vertex, o.id)
            if o.leg not in t.legs:
                raise NetworkInvalid(f"open leg {o.id!r}: vertex {o.vertex!r} has no leg {o.leg!r}")
            self._claim(o.id, seen_ids, [(o.vertex, o.leg)], used)
        for v, t in self._vertices.items():
            for leg in t.legs:
                if (v, leg) not in used:
                    raise NetworkInvalid(f"leg {leg!r} of vertex {v!r} is neither contracted nor open")

    def _tensor_or_raise(self, v, eid):
        if v not in self._vertices:
            raise NetworkInvalid(f"edge {eid!r} refers to unknown vertex {v!r}")
        return self._vertices[v]

    @staticmethod
    def _claim(eid, seen_ids, ends, used):
        if eid in seen_ids:
            raise NetworkInvalid(f"duplicate edge id {eid!r}")
        seen_ids.add(eid)
        for end in ends:
            if end in used:
                raise NetworkInvalid(f"leg {end} used by more than one edge")
            used.add(end)

    # -- accessors ---------------------------------------------------------
    @property
    def vertices(self) -> dict:
        return dict(self._vertices)

    @property
    def vertex_ids(self) -> list:
        return list(self._vertices)

    @property
    def edges(self) -> tuple:
        return self._edges

    @property
    def open_legs(self) -> tuple:
        return self._open

    def tensor(self, v) -> DenseTensor:
        try:
            return self._vertices[v]
        except KeyError:
            raise VertexNotFound(f"no vertex {v!r}") from None

    def edge_id(self, v, leg) -> str:
        return self._leg_to_edge[(v, leg)]

    def vertex_edge_legs(self, v) -> tuple:
        """Edge ids of vertex ``v``'s legs, in the tensor's own axis order."""
        return tuple(self._leg_to_edge[(v, leg)] for leg in self.tensor(v).legs)

    def open_ids(self) -> list:
        return sorted(o.id for o in self._open)

    def open_dims(self) -> dict:
        return {o.id: self._vertices[o.vertex].dim(o.leg) for o in self._open}

    def replace(self, updates: dict) -> "TensorNetwork":
        """Same graph with some vertex tensors swapped (shapes and legs must agree)."""
        verts = dict(self._vertices)
        for v, t in updates.items():
            old = self.tensor(v)
            if not isinstance(t, DenseTensor):
                t = DenseTensor(old.legs, np.asarray(t, dtype=float))
            if t.legs != old.legs or t.dims != old.dims:
                t = t.transpose(old.legs) if set(t.legs) == set(old.legs) else t
                if t.legs != old.legs or t.dims != old.dims:
                    raise ValidationError(f"replacement for {v!r} does not match legs/dims")
            verts[v] = t
        return TensorNetwork(verts, self._edges, self._open)

    def relabel(self, vertex_map: dict | None = None, edge_map: dict | None = None) -> "TensorNetwork":
        vm = vertex_map or {}
        em = edge_map or {}
        verts = {vm.get(v, v): t for v, t in self._vertices.items()}
        edges = [
            Edge(em.get(e.id, e.id), (vm.get(e.a[0], e.a[0]), e.a[1]), (vm.get(e.b[0], e.b[0]), e.b[1]))
            for e in self._edges
        ]
        opens = [OpenLeg(em.get(o.id, o.id), vm.get(o.vertex, o.vertex), o.leg) for o in self._open]
        return TensorNetwork(verts, edges, opens)

    def __len__(self):
        return len(self._vertices)

    def __repr__(self):
        return (
            f"TensorNetwork(vertices={list(self._vertices)}, edges={len(self._edges)}, "
            f"open={self.open_ids()})"
        )


# -- contraction -------------------------------------------------------------

def _result_size(a: DenseTensor, b: DenseTensor) -> int:
    shared = set(a.legs) & set(b.legs)
    size = 1
    for t in (a, b):
        for leg, d in zip(t.legs, t.dims):
            if leg not in shared:
                size *= d
    return size


def contract_network(tn: TensorNetwork, cap: int = DEFAULT_CAP) -> DenseTensor:
    """Contract the whole network; output legs are the open edge ids, sorted.

    Pairwise greedy order: always contract the pair with the smallest
    intermediate, preferring pairs that share at least one edge.
    """
    out_dims = tn.open_dims()
    out_size = int(np.prod(list(out_dims.values()), dtype=np.int64)) if out_dims else 1
    if out_size > cap:
        raise TooLargeToMaterialize(out_size, cap, "network output")
    if len(tn) == 0:
        return DenseTensor((), np.array(1.0))
    work = [t.relabel({leg: tn.edge_id(v, leg) for leg in t.legs}) for v, t in tn.vertices.items()]
    while len(work) > 1:
        best = None
        for i in range(len(work)):
            for j in range(i + 1, len(work)):
                shares = bool(set(work[i].legs) & set(work[j].legs))
                key = (not shares, _result_size(work[i], work[j]), i, j)
                if best is None or key < best:
                    best = key
        _, size, i, j = best
        if size > cap:
            raise TooLargeToMaterialize(size, cap, "intermediate")
        a, b = work[i], work[j]
        shared = [l for l in a.legs if l in set(b.legs)]
        c = contract_pair(a, b, [(l, l) for l in shared])
        work = [t for k, t in enumerate(work) if k not in (i, j)] + [c]
    return work[0].transpose(sorted(work[0].legs))


def sub_network(tn: TensorNetwork, vset: Iterable) -> TensorNetwork:
    """Induced sub-network; edges leaving ``vset`` become open legs with the same id."""
    vset = set(vset)
    if not vset:
        raise ValidationError("vset must be nonempty")
    for v in vset:
        tn.tensor(v)
    verts = {v: t for v, t in tn.vertices.items() if v in vset}
    edges, opens = [], [o for o in tn.open_legs if o.vertex in vset]
    for e in tn.edges:
        ina, inb = e.a[0] in vset, e.b[0] in vset
        if ina and inb:
            edges.append(e)
        elif ina:
            opens.append(OpenLeg(e.id, e.a[0], e.a[1]))
        elif inb:
            opens.append(OpenLeg(e.id, e.b[0], e.b[1]))
    return TensorNetwork(verts, edges, opens)


def cut_edges(tn: TensorNetwork, vset) -> list:
    vset = set(vset)
    return sorted(e.id for e in tn.edges if (e.a[0] in vset) != (e.b[0] in vset))


# -- environments ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnvironmentMatrix:
    """Kronecker-structured environment ``N ⊗ I``.

    ``n_block`` has rows over the complement's own open legs and columns over
    the cut edges; the identity acts on the subset's own open legs.
    """

    n_block: Matricization
    identity_legs: tuple
    identity_dims: tuple

    @property
    def row_legs(self) -> tuple:
        return self.n_block.row_legs + self.identity_legs

    @property
    def col_legs(self) -> tuple:
        return self.n_block.col_legs + self.identity_legs

    @property
    def identity_size(self) -> int:
        return int(np.prod(self.identity_dims, dtype=np.int64)) if self.identity_dims else 1

    @property
    def shape(self) -> tuple:
        r, c = self.n_block.shape
        k = self.identity_size
        return (r * k, c * k)

    def spectral_norm(self, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
        return spectral_norm(self.n_block, tol, max_iter)

    def frobenius_norm(self) -> float:
        return frobenius_norm(self.n_block) * float(np.sqrt(self.identity_size))

    def gram(self) -> np.ndarray:
        """``NᵀN``; the full Gram is this ⊗ I."""
        n = self.n_block.matrix
        return n.T @ n

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``(N ⊗ I) x`` for a vector ordered like ``col_legs``."""
        n = self.n_block.matrix
        return (n @ np.asarray(x).reshape(n.shape[1], self.identity_size)).reshape(-1)

    def apply_transpose(self, y: np.ndarray) -> np.ndarray:
        n = self.n_block.matrix
        return (n.T @ np.asarray(y).reshape(n.shape[0], self.identity_size)).reshape(-1)

    def materialize(self, cap: int = DEFAULT_CAP) -> np.ndarray:
        if not self.identity_legs:
            return np.array(self.n_block.matrix)
        eye_legs = tuple(("id", l) for l in self.identity_legs)
        eye_cols = tuple(("id*", l) for l in self.identity_legs)
        eye = np.eye(self.identity_size).reshape(self.identity_dims * 2)
        ident = Matricization(DenseTensor(eye_legs + eye_cols, eye), eye_legs, eye_cols)
        return np.array(kron(self.n_block, ident, cap).matrix)


def environment_matrix(tn: TensorNetwork, vset: Iterable, cap: int = DEFAULT_CAP) -> EnvironmentMatrix:
    vset = set(vset)
    if not vset:
        raise ValidationError("vset must be nonempty")
    for v in vset:
        tn.tensor(v)
    rest = [v for v in tn.vertex_ids if v not in vset]
    own_open = sorted(o.id for o in tn.open_legs if o.vertex in vset)
    dims = tn.open_dims()
    if rest:
        env = contract_network(sub_network(tn, rest), cap)
    else:
        env = DenseTensor((), np.array(1.0))
    cuts = cut_edges(tn, vset)
    rows = sorted(l for l in env.legs if l not in set(cuts))
    n_block = matricize(env, rows, cuts)
    return EnvironmentMatrix(n_block, tuple(own_open), tuple(dims[l] for l in own_open))


def jacobian_block(tn: TensorNetwork, v, cap: int = DEFAULT_CAP, env: EnvironmentMatrix | None = None) -> np.ndarray:
    """``∂ vec(T) / ∂ vec(T_v)`` as a dense matrix.

    Rows follow the network output (sorted open edge ids), columns follow
    vertex ``v``'s tensor in its own axis order.
    """
    env = environment_matrix(tn, {v}, cap) if env is None else env
    mat = env.materialize(cap)
    row_legs, col_legs = list(env.row_legs), list(env.col_legs)
    dims = {**tn.open_dims()}
    for e in tn.edges:
        dims[e.id] = tn.tensor(e.a[0]).dim(e.a[1])
    rdims = [dims[l] for l in row_legs]
    cdims = [dims[l] for l in col_legs]
    t = mat.reshape(rdims + cdims)
    out = tn.open_ids()
    native = list(tn.vertex_edge_legs(v))
    perm = [row_legs.index(l) for l in out] + [len(row_legs) + col_legs.index(l) for l in native]
    t = np.transpose(t, perm)
    nrow = int(np.prod([dims[l] for l in out], dtype=np.int64)) if out else 1
    return t.reshape(nrow, -1)


class MatvecCheck(NamedTuple):
    ok: bool
    max_deviation: float

    def __bool__(self):
        return self.ok


def verify_matvec_identity(
    tn: TensorNetwork,
    vset: Iterable,
    tol: float = 1e-10,
    env: EnvironmentMatrix | None = None,
    cap: int = DEFAULT_CAP,
) -> MatvecCheck:
    """Check ``vec(T) = M · vec(T_sub)`` for the environment of ``vset``."""
    vset = set(vset)
    env = environment_matrix(tn, vset, cap) if env is None else env
    full = contract_network(tn, cap).transpose(env.row_legs)
    sub = contract_network(sub_network(tn, vset), cap).transpose(env.col_legs)
    rhs = env.apply(sub.flat())
    lhs = full.flat()
    dev = float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0
    scale = max(float(np.max(np.abs(lhs))) if lhs.size else 0.0, 1e-300)
    return MatvecCheck(dev <= tol * scale, dev)


def is_canonical(tn: TensorNetwork, center, tol: float = 1e-8, cap: int = DEFAULT_CAP) -> bool:
    """Whether the environment of ``center`` is an isometry (``MᵀM = I``)."""
    env = environment_matrix(tn, {center}, cap)
    g = env.gram()
    return bool(np.max(np.abs(g - np.eye(g.shape[0]))) <= tol)


# -- JSON I/O ----------------------------------------------------------------

def _load_data(spec, legs, dims, vid):
    if isinstance(spec, dict) and "random" in spec:
        r = spec["random"]
        dist = dist_from_dict(r.get("dist", {"name": "uniform"}))
        return random_tensor(dims, dist, int(r["seed"]), legs).data
    arr = np.asarray(spec, dtype=float)
    if arr.size != int(np.prod(dims, dtype=np.int64)):
        raise NetworkInvalid(f"vertex {vid!r}: {arr.size} data values for dims {dims}")
    return arr.reshape(dims)


def network_from_dict(doc: dict) -> TensorNetwork:
    try:
        verts = {}
        for v in doc["vertices"]:
            legs = [l["leg"] for l in v["legs"]]
            dims = tuple(int(l["dim"]) for l in v["legs"])
            data = _load_data(v.get("data"), legs, dims, v["id"])
            verts[v["id"]] = DenseTensor(tuple(legs), data)
        edges = [Edge(e["id"], tuple(e["a"]), tuple(e["b"])) for e in doc.get("edges", [])]
        opens = [OpenLeg(o["id"], o["v"], o["leg"]) for o in doc.get("open", [])]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise NetworkInvalid(f"malformed network document: {exc}") from exc
    return TensorNetwork(verts, edges, opens)


def network_to_dict(tn: TensorNetwork) -> dict:
    return {
        "vertices": [
            {
                "id": v,
                "legs": [{"leg": l, "dim": d} for l, d in zip(t.legs, t.dims)],
                "data": t.flat().tolist(),
            }
            for v, t in tn.vertices.items()
        ],
        "edges": [{"id": e.id, "a": list(e.a), "b": list(e.b)} for e in tn.edges],
        "open": [{"id": o.id, "v": o.vertex, "leg": o.leg} for o in tn.open_legs],
    }


def load_network(path) -> TensorNetwork:
    with open(Path(path)) as fh:
        return network_from_dict(json.load(fh))


def save_network(tn: TensorNetwork, path, extra: dict | None = None) -> None:
    doc = network_to_dict(tn)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1))
