"""Random network generators and an einsum oracle shared by the tests."""

from __future__ import annotations

import string

import numpy as np

from tncond.network import Edge, OpenLeg, TensorNetwork
from tncond.tensor import DenseTensor


def random_network(seed, n_vertices=None, max_dim=4, scalar=False, edge_prob=0.6) -> TensorNetwork:
    """Random connected network with at most 4 vertices and dims <= ``max_dim``.

    Every vertex gets at most one open leg unless ``scalar``; sizes stay
    small enough for the dense oracles.
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 5)) if n_vertices is None else n_vertices
    names = [f"v{i}" for i in range(k)]
    legs = {v: [] for v in names}
    edges, opens = [], []
    order = rng.permutation(k)
    pairs = {(min(a, b), max(a, b)) for a, b in zip(order[:-1], order[1:])}
    for i in range(k):
        for j in range(i + 1, k):
            if rng.random() < edge_prob:
                pairs.add((i, j))
    for i, j in sorted(pairs):
        d = int(rng.integers(1, max_dim + 1))
        eid = f"e{i}{j}"
        legs[names[i]].append((eid, d))
        legs[names[j]].append((eid, d))
        edges.append(Edge(eid, (names[i], eid), (names[j], eid)))
    if not scalar:
        for i, v in enumerate(names):
            if rng.random() < 0.6 or i == 0:
                oid = f"o{i}"
                legs[v].append((oid, int(rng.integers(1, max_dim + 1))))
                opens.append(OpenLeg(oid, v, oid))
    verts = {
        v: DenseTensor(tuple(l for l, _ in ls), rng.uniform(-1, 1, tuple(d for _, d in ls)))
        for v, ls in legs.items()
    }
    return TensorNetwork(verts, edges, opens)


def einsum_contract(tn: TensorNetwork, replace: dict | None = None, batch: dict | None = None) -> np.ndarray:
    """Dense contraction through one ``np.einsum`` call.

    Output axes follow sorted open-leg ids. ``replace`` substitutes vertex
    arrays; ``batch`` maps one vertex to an array with an extra trailing
    axis, which becomes the trailing output axis.
    """
    replace = replace or {}
    letters = iter(string.ascii_letters)
    sym = {}
    for e in tn.edges:
        sym[e.a] = sym[e.b] = next(letters)
    for o in tn.open_legs:
        sym[(o.vertex, o.leg)] = next(letters)
    out_sym = {o.id: sym[(o.vertex, o.leg)] for o in tn.open_legs}
    extra = next(letters)
    ops, subs = [], []
    for v, t in tn.vertices.items():
        s = "".join(sym[(v, l)] for l in t.legs)
        if batch and v in batch:
            ops.append(batch[v])
            subs.append(s + extra)
        else:
            ops.append(replace.get(v, t.data))
            subs.append(s)
    out = "".join(out_sym[o] for o in sorted(out_sym))
    if batch:
        out += extra
    return np.einsum(",".join(subs) + "->" + out, *ops, optimize=True)
