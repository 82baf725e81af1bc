"""Matrix product states: construction, canonical forms, block norms and bounds.

Sites are stored as order-3 arrays ``(left bond, physical, right bond)``; the
outer bonds of the first and last site have dimension 1 and are dropped when
the chain is exported as a :class:`~tncond.network.TensorNetwork`. Site
indices are 0-based throughout.

Norms of the (exponentially large) block matricizations are computed from
their Gram matrices, which transfer contraction produces in ``O(n p D^3)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NotCanonical, ShapeError, TooLargeToMaterialize, ValidationError
from .network import Edge, OpenLeg, TensorNetwork, network_from_dict, network_to_dict
from .perturb import PerturbationSet
from .tensor import (
    DEFAULT_CAP,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    DenseTensor,
    SeedLike,
    Uniform,
    as_rng,
    gram_spectral_norm,
)

CANONICAL_TOL = 1e-8


def site_id(j: int) -> str:
    return f"s{j:03d}"


def bond_id(j: int) -> str:
    return f"b{j:03d}"


def phys_id(j: int) -> str:
    return f"p{j:03d}"


@dataclass(frozen=True, eq=False)
class Mps:
    sites: tuple
    center: int | None = None

    def __post_init__(self):
        sites = tuple(np.array(s, dtype=float) for s in self.sites)
        if not sites:
            raise ShapeError("an MPS needs at least one site")
        for j, s in enumerate(sites):
            if s.ndim != 3:
                raise ShapeError(f"site {j} has order {s.ndim}, expected (left, phys, right)")
            s.setflags(write=False)
        if sites[0].shape[0] != 1 or sites[-1].shape[2] != 1:
            raise ShapeError("boundary bonds must have dimension 1")
        for j in range(len(sites) - 1):
            if sites[j].shape[2] != sites[j + 1].shape[0]:
                raise ShapeError(
                    f"bond {j}: right dim {sites[j].shape[2]} != left dim {sites[j + 1].shape[0]}"
                )
        if self.center is not None and not 0 <= self.center < len(sites):
            raise ValidationError(f"center {self.center} out of range")
        object.__setattr__(self, "sites", sites)

    @property
    def n(self) -> int:
        return len(self.sites)

    def __len__(self):
        return self.n

    @property
    def bond_dims(self) -> list:
        return [s.shape[2] for s in self.sites[:-1]]

    @property
    def phys_dims(self) -> list:
        return [s.shape[1] for s in self.sites]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    @property
    def size(self) -> int:
        return int(np.prod(self.phys_dims, dtype=np.int64))

    def site_arrays(self) -> dict:
        return dict(enumerate(self.sites))

    def perturbed(self, entries: dict) -> "Mps":
        sites = list(self.sites)
        for j, d in entries.items():
            sites[j] = sites[j] + d
        return Mps(tuple(sites))

    def scaled(self, alpha: float) -> "Mps":
        sites = list(self.sites)
        k = self.center if self.center is not None else 0
        sites[k] = alpha * sites[k]
        return Mps(tuple(sites), self.center)

    def reversed(self) -> "Mps":
        sites = tuple(np.transpose(s, (2, 1, 0)) for s in reversed(self.sites))
        c = None if self.center is None else self.n - 1 - self.center
        return Mps(sites, c)

    def to_dense(self, cap: int = DEFAULT_CAP) -> np.ndarray:
        if self.size > cap:
            raise TooLargeToMaterialize(self.size, cap, "MPS state")
        psi = np.ones((1, 1))
        for s in self.sites:
            dl, p, dr = s.shape
            psi = (psi @ s.reshape(dl, p * dr)).reshape(-1, dr)
        return psi.reshape(self.phys_dims)

    def norm(self) -> float:
        return float(np.sqrt(max(left_grams(self)[-1].item(), 0.0)))

    def normalized(self) -> "Mps":
        return self.scaled(1.0 / self.norm())

    def distance(self, other: "Mps", cap: int = DEFAULT_CAP) -> float:
        return mps_distance(self, other, cap)

    def to_network(self) -> TensorNetwork:
        n = self.n
        verts, edges, opens = {}, [], []
        for j, s in enumerate(self.sites):
            legs, data = ["phys"], s
            if j > 0:
                legs = ["left"] + legs
            else:
                data = data[0]
            if j < n - 1:
                legs = legs + ["right"]
            else:
                data = data[..., 0]
            verts[site_id(j)] = DenseTensor(tuple(legs), data)
            opens.append(OpenLeg(phys_id(j), site_id(j), "phys"))
            if j < n - 1:
                edges.append(Edge(bond_id(j), (site_id(j), "right"), (site_id(j + 1), "left")))
        return TensorNetwork(verts, edges, opens)

    def to_dict(self) -> dict:
        doc = network_to_dict(self.to_network())
        doc["topology"] = {
            "type": "mps",
            "sites": [site_id(j) for j in range(self.n)],
            "center": self.center,
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Mps":
        topo = doc.get("topology") or {}
        if topo.get("type") != "mps":
            raise ValidationError("document has no MPS topology block")
        tn = network_from_dict(doc)
        return cls.from_network(tn, topo["sites"], topo.get("center"))

    @classmethod
    def from_network(cls, tn: TensorNetwork, order, center=None) -> "Mps":
        sites = []
        for v in order:
            t = tn.tensor(v)
            want = [l for l in ("left", "phys", "right") if l in t.legs]
            if set(want) != set(t.legs) or "phys" not in want:
                raise ShapeError(f"vertex {v!r} legs {t.legs} are not (left, phys, right)")
            data = t.transpose(want).data
            if "left" not in want:
                data = data[None]
            if "right" not in want:
                data = data[..., None]
            sites.append(data)
        return cls(tuple(sites), center)


@dataclass(frozen=True)
class BlockNorms:
    """2-norms of left/right blocks of an MPS.

    ``left_block[k]`` is ``‖T^{[0,k-1]}_→‖₂`` (sites ``0..k-1`` with the right
    bond as column) and ``right_block[k]`` is ``‖T^{[k,n-1]}_←‖₂``; empty blocks
    have norm 1.
    """

    left_block: tuple
    right_block: tuple
    frob: float

    @property
    def right_going(self) -> list:
        """``‖T^{[1,j]}_→‖₂`` for ``j = 1..n-1`` in 1-based block notation."""
        return list(self.left_block[1:-1])

    @property
    def left_going(self) -> list:
        """``‖T^{[j,n]}_←‖₂`` for ``j = 2..n`` in 1-based block notation."""
        return list(self.right_block[1:-1])


def left_grams(m: Mps) -> list:
    """``grams[k]`` = Gram of the block of sites ``0..k-1`` over its right bond."""
    out = [np.ones((1, 1))]
    for s in m.sites:
        out.append(np.einsum("ab,asc,bsd->cd", out[-1], s, s, optimize=True))
    return out


def right_grams(m: Mps) -> list:
    """``grams[k]`` = Gram of the block of sites ``k..n-1`` over its left bond."""
    out = [np.ones((1, 1))]
    for s in reversed(m.sites):
        out.append(np.einsum("asc,bsd,cd->ab", s, s, out[-1], optimize=True))
    return out[::-1]


def block_norms(m: Mps, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> BlockNorms:
    lg, rg = left_grams(m), right_grams(m)
    n = m.n
    left = [1.0] + [gram_spectral_norm(lg[k], tol, max_iter) for k in range(1, n + 1)]
    right = [gram_spectral_norm(rg[k], tol, max_iter) for k in range(n)] + [1.0]
    frob = float(np.sqrt(max(lg[-1].item(), 0.0)))
    return BlockNorms(tuple(left), tuple(right), frob)


def inner(a: Mps, b: Mps) -> float:
    env = np.ones((1, 1))
    for sa, sb in zip(a.sites, b.sites):
        env = np.einsum("ab,asc,bsd->cd", env, sa, sb, optimize=True)
    return float(env.item())


def mps_distance(a: Mps, b: Mps, cap: int = DEFAULT_CAP) -> float:
    """``‖a − b‖_F``, dense when the state fits under ``cap``.

    Above the cap it falls back to ``‖a‖² + ‖b‖² − 2⟨a, b⟩``, which loses
    roughly half the significant digits when the two states nearly coincide.
    """
    if a.phys_dims != b.phys_dims:
        raise ShapeError("MPS physical dimensions differ")
    if a.size <= cap:
        return float(np.linalg.norm((a.to_dense(cap) - b.to_dense(cap)).reshape(-1)))
    aa, bb, ab = inner(a, a), inner(b, b), inner(a, b)
    sq = aa + bb - 2.0 * ab
    if sq < 1e-12 * max(aa, bb):
        warnings.warn(
            "inner-product distance is dominated by cancellation; error below ~1e-6 relative "
            "is not resolved",
            RuntimeWarning,
            stacklevel=2,
        )
    return float(np.sqrt(max(sq, 0.0)))


def bond_envelope(n: int, p: int, max_bond: int | None) -> list:
    dims = []
    for j in range(1, n):
        d = min(p**j, p ** (n - j))
        if max_bond is not None:
            d = min(d, max_bond)
        dims.append(int(d))
    return dims


def random_mps(n: int, max_bond: int | None, p: int = 2, seed: SeedLike = None, dist=None) -> Mps:
    """Random MPS with bond dims ``min(p^j, p^(n-j), D)``; ``max_bond=None`` means uncapped."""
    if n < 2:
        raise ValidationError("random_mps needs n >= 2")
    rng = as_rng(seed)
    dist = Uniform() if dist is None else dist
    bonds = [1] + bond_envelope(n, p, max_bond) + [1]
    sites = tuple(dist.sample(rng, (bonds[j], p, bonds[j + 1])) for j in range(n))
    return Mps(sites)


def product_state_mps(vectors, norms=None) -> Mps:
    """Rank-1 chain: site ``j`` is ``norms[j] * vectors[j] / ‖vectors[j]‖`` with unit bonds."""
    sites = []
    for j, v in enumerate(vectors):
        v = np.asarray(v, dtype=float)
        v = v / np.linalg.norm(v)
        scale = 1.0 if norms is None else float(norms[j])
        sites.append((scale * v).reshape(1, -1, 1))
    return Mps(tuple(sites))


def _qr(a: np.ndarray):
    """QR with a nonnegative diagonal in ``R``, so the gauge is unique."""
    q, r = np.linalg.qr(a)
    sign = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * sign, sign[:, None] * r


def _left_qr(site: np.ndarray):
    dl, p, dr = site.shape
    q, r = _qr(site.reshape(dl * p, dr))
    return q.reshape(dl, p, q.shape[1]), r


def _right_qr(site: np.ndarray):
    dl, p, dr = site.shape
    q, r = _qr(site.reshape(dl, p * dr).T)
    return q.T.reshape(q.shape[1], p, dr), r.T


def canonicalize(m: Mps, center: int) -> Mps:
    """Mixed canonical form by QR sweeps toward ``center``.

    Sites left of ``center`` become left-orthogonal, sites right of it
    right-orthogonal; the represented state is unchanged. A bond whose
    neighbour is too small to carry it shrinks to the attainable rank.
    """
    n = m.n
    if not 0 <= center < n:
        raise ValidationError(f"center {center} out of range for {n} sites")
    sites = list(m.sites)
    for j in range(center):
        q, r = _left_qr(sites[j])
        sites[j] = q
        sites[j + 1] = np.tensordot(r, sites[j + 1], axes=(1, 0))
    for j in range(n - 1, center, -1):
        q, l = _right_qr(sites[j])
        sites[j] = q
        sites[j - 1] = np.tensordot(sites[j - 1], l, axes=(2, 0))
    return Mps(tuple(sites), center)


def is_canonical_mps(m: Mps, center: int, tol: float = CANONICAL_TOL) -> bool:
    """Environment of ``center`` is an isometry, checked through transfer Grams."""
    lg = np.ones((1, 1))
    for s in m.sites[:center]:
        lg = np.einsum("ab,asc,bsd->cd", lg, s, s, optimize=True)
    rg = np.ones((1, 1))
    for s in reversed(m.sites[center + 1 :]):
        rg = np.einsum("asc,bsd,cd->ab", s, s, rg, optimize=True)
    ok_l = np.max(np.abs(lg - np.eye(lg.shape[0]))) <= tol
    ok_r = np.max(np.abs(rg - np.eye(rg.shape[0]))) <= tol
    return bool(ok_l and ok_r)


# -- bounds ------------------------------------------------------------------

def _site_eps(eps, n) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(eps, dtype=float), (n,))
    if np.any(arr < 0):
        raise ValidationError("eps must be nonnegative")
    return arr


def single_site_bound(m: Mps, j: int, eps: float, norms: BlockNorms | None = None) -> float:
    """Worst-case relative error bound for a relative ``eps`` perturbation of site ``j``.

    A canonical MPS centered at ``j`` (per its ``center`` metadata) returns ``eps``.
    """
    if not 0 <= j < m.n:
        raise ValidationError(f"site {j} out of range")
    if eps == 0:
        return 0.0
    if m.center == j:
        return float(eps)
    norms = block_norms(m) if norms is None else norms
    return float(
        eps * norms.left_block[j] * np.linalg.norm(m.sites[j]) * norms.right_block[j + 1] / norms.frob
    )


def site_amplification(m: Mps, norms: BlockNorms | None = None) -> np.ndarray:
    """Per-site factors ``‖left‖₂ ‖T_j‖_F ‖right‖₂ / ‖T‖_F``."""
    norms = block_norms(m) if norms is None else norms
    return np.array(
        [
            norms.left_block[j] * np.linalg.norm(m.sites[j]) * norms.right_block[j + 1] / norms.frob
            for j in range(m.n)
        ]
    )


def all_site_bound_general(m: Mps, eps, norms: BlockNorms | None = None) -> float:
    e = _site_eps(eps, m.n)
    return float(np.sum(e * site_amplification(m, norms)))


def all_site_bound_canonical(m: Mps, eps: float, norms: BlockNorms | None = None) -> tuple:
    """``(exact_sum, simple)`` for a canonical MPS.

    For the center at the last site this is
    ``ε(1 + Σ_{j<n} √D_j ‖C^{[j+1,n]}_←‖₂ / ‖C‖_F)`` and ``ε(1 + (n−1)√D)``.
    Other centers use the mirrored orientation on each side of the center.
    """
    c = m.center
    if c is None or not is_canonical_mps(m, c):
        raise NotCanonical("all_site_bound_canonical needs a canonical MPS")
    norms = block_norms(m) if norms is None else norms
    bonds = m.bond_dims
    total = 1.0
    for j in range(c):
        total += np.sqrt(bonds[j]) * norms.right_block[j + 1] / norms.frob
    for j in range(c + 1, m.n):
        total += np.sqrt(bonds[j - 1]) * norms.left_block[j] / norms.frob
    simple = 1.0 + (m.n - 1) * np.sqrt(m.max_bond)
    return float(eps * total), float(eps * simple)


def comparison_factor_mps(n: int, D: float) -> float:
    if n < 1 or D < 1:
        raise ValidationError("n and D must be >= 1")
    return float((1.0 + (n - 1) * np.sqrt(D)) / n)


# -- truncation --------------------------------------------------------------

def _keep_rank(s: np.ndarray, eps: float) -> int:
    """Smallest k whose discarded tail has Frobenius mass <= eps * ‖s‖."""
    if eps <= 0:
        return len(s)
    budget = eps * np.linalg.norm(s)
    tail = np.sqrt(np.cumsum((s**2)[::-1]))[::-1]  # tail[k] = ‖s[k:]‖
    for k in range(1, len(s) + 1):
        if k == len(s) or tail[k] <= budget:
            return k
    return len(s)


def truncate_all_with_canonicalization(m: Mps, eps, cap: int = DEFAULT_CAP) -> tuple:
    """Truncate every site in turn, each time with that site as canonical center.

    Site ``i < n-1`` is truncated on its right bond, the last site on its left
    bond. Returns ``(truncated Mps, exact relative error vs. m)``.
    """
    n = m.n
    e = _site_eps(eps, n)
    if np.any(e >= 1):
        raise ValidationError("per-site eps must lie in [0, 1)")
    sites = list(canonicalize(m, 0).sites)
    for i in range(n - 1):
        dl, p, dr = sites[i].shape
        u, s, vt = np.linalg.svd(sites[i].reshape(dl * p, dr), full_matrices=False)
        k = _keep_rank(s, e[i])
        sites[i] = u[:, :k].reshape(dl, p, k)
        carry = s[:k, None] * vt[:k]
        sites[i + 1] = np.tensordot(carry, sites[i + 1], axes=(1, 0))
    dl, p, _ = sites[-1].shape
    u, s, vt = np.linalg.svd(sites[-1].reshape(dl, p), full_matrices=False)
    k = _keep_rank(s, e[-1])
    if k < len(s):
        if n > 1:
            sites[-2] = np.tensordot(sites[-2], u[:, :k], axes=(2, 0))
            sites[-1] = (s[:k, None] * vt[:k]).reshape(k, p, 1)
        else:
            sites[-1] = ((u[:, :k] * s[:k]) @ vt[:k]).reshape(dl, p, 1)
    out = Mps(tuple(sites), n - 1)
    ref = m.norm()
    return out, mps_distance(m, out, cap) / ref


# -- tight instance ----------------------------------------------------------

def _basis_with_first(v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal matrix whose first column is the unit vector ``v``."""
    d = v.shape[0]
    mat = np.column_stack([v, rng.standard_normal((d, d - 1))]) if d > 1 else v.reshape(1, 1)
    q, _ = np.linalg.qr(mat)
    if q[:, 0] @ v < 0:
        q[:, 0] = -q[:, 0]
    return q


def _unit(rng, d):
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x)


def worst_case_construction(n: int, D: int, p: int, delta: float, seed: SeedLike = 0) -> tuple:
    """Canonical MPS (center = last site) attaining the all-site canonical bound.

    Returns the MPS and a unit-scaled perturbation (multiply by ε) for which
    ``ℰ_r → ε(1 + (n−1)√D)`` as ``delta → 0``. Bond ``k`` carries the unit
    vector ``u_{k+1}``; the isometries satisfy ``M_k u_{k+1} = u_k ⊗ v_k``.
    """
    if n < 2 or D < 1 or p < 1:
        raise ShapeError("need n >= 2, D >= 1, p >= 1")
    if p < D:
        raise ShapeError(f"first site must be a (p x D) isometry: need p >= D, got p={p}, D={D}")
    rng = as_rng(seed)
    # u[k] lives on the left bond of site k (k = 1..n-1), v[k] on physical leg k
    u = {k: _unit(rng, D) for k in range(1, n)}
    v = {k: _unit(rng, p) for k in range(1, n)}
    sites = []
    # site 0: (p x D) isometry with M_0 u_1 = v_0
    v0 = _unit(rng, p)
    m0 = _basis_with_first(v0, rng)[:, :D] @ _basis_with_first(u[1], rng).T
    sites.append(m0.reshape(1, p, D))
    for k in range(1, n - 1):
        w = np.kron(u[k], v[k])
        mk = _basis_with_first(w, rng)[:, :D] @ _basis_with_first(u[k + 1], rng).T
        sites.append(mk.reshape(D, p, D))
    v_last = _unit(rng, p)
    noise = rng.standard_normal((D, p))
    last = np.outer(u[n - 1], v_last) + delta * noise / np.linalg.norm(noise)
    sites.append(last.reshape(D, p, 1))
    m = Mps(tuple(sites), n - 1)

    scale = np.sqrt(D)
    entries = {0: scale * np.outer(v0, u[1]).reshape(1, p, D)}
    for k in range(1, n - 1):
        entries[k] = scale * np.einsum("a,s,b->asb", u[k], v[k], u[k + 1])
    entries[n - 1] = np.array(sites[-1])
    return m, PerturbationSet(entries, "explicit", 1.0)
