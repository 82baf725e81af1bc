"""PEPS grids, their column-to-MPS reduction and the columnwise error bounds.

Sites are order-5 arrays ``(up, down, left, right, phys)``; legs on the grid
boundary have dimension 1 and are dropped when exporting to a
:class:`~tncond.network.TensorNetwork`. Rows and columns are 0-based, row 0 on
top, and the canonical center is the lower-right corner.

Perturbations follow the mixed model: columns ``0..n-2`` receive one
perturbation of the whole (fused) column each, the last column receives
sitewise perturbations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidPerturbationBudget, NotCanonical, ShapeError, TooLargeToMaterialize, ValidationError
from .mps import Mps, all_site_bound_canonical, all_site_bound_general, block_norms, is_canonical_mps
from .network import Edge, OpenLeg, TensorNetwork, is_canonical, network_from_dict, network_to_dict
from .tensor import DEFAULT_CAP, DenseTensor, SeedLike, Uniform, as_rng

LEGS = ("up", "down", "left", "right", "phys")
CANONICAL_TOL = 1e-8


def site_id(i: int, j: int) -> str:
    return f"t{i:03d}_{j:03d}"


@dataclass(frozen=True, eq=False)
class Peps:
    """An ``m × n`` grid of order-5 site arrays."""

    grid: tuple

    def __post_init__(self):
        rows = tuple(tuple(np.array(s, dtype=float) for s in row) for row in self.grid)
        if not rows or not rows[0] or any(len(r) != len(rows[0]) for r in rows):
            raise ShapeError("PEPS grid must be a nonempty rectangle")
        m, n = len(rows), len(rows[0])
        for i, row in enumerate(rows):
            for j, s in enumerate(row):
                if s.ndim != 5:
                    raise ShapeError(f"site ({i},{j}) has order {s.ndim}, expected 5")
                up, down, left, right, _ = s.shape
                if (i == 0 and up != 1) or (i == m - 1 and down != 1):
                    raise ShapeError(f"site ({i},{j}): vertical boundary legs must have dim 1")
                if (j == 0 and left != 1) or (j == n - 1 and right != 1):
                    raise ShapeError(f"site ({i},{j}): horizontal boundary legs must have dim 1")
                if i + 1 < m and down != rows[i + 1][j].shape[0]:
                    raise ShapeError(f"vertical bond below ({i},{j}) has mismatched dims")
                if j + 1 < n and right != row[j + 1].shape[2]:
                    raise ShapeError(f"horizontal bond right of ({i},{j}) has mismatched dims")
                s.setflags(write=False)
        object.__setattr__(self, "grid", rows)

    @property
    def m(self) -> int:
        return len(self.grid)

    @property
    def n(self) -> int:
        return len(self.grid[0])

    def site(self, i: int, j: int) -> np.ndarray:
        return self.grid[i][j]

    @property
    def horizontal_dims(self) -> np.ndarray:
        """``[i, j]`` = dim of the bond right of site ``(i, j)``, for ``j < n-1``."""
        return np.array([[self.grid[i][j].shape[3] for j in range(self.n - 1)] for i in range(self.m)])

    @property
    def phys_dims(self) -> np.ndarray:
        return np.array([[s.shape[4] for s in row] for row in self.grid])

    def with_sites(self, updates: dict) -> "Peps":
        grid = [list(r) for r in self.grid]
        for (i, j), a in updates.items():
            grid[i][j] = a
        return Peps(tuple(tuple(r) for r in grid))

    def to_network(self) -> TensorNetwork:
        m, n = self.m, self.n
        verts, edges, opens = {}, [], []
        for i in range(m):
            for j in range(n):
                s = self.grid[i][j]
                keep = [k for k, leg in enumerate(LEGS) if _is_bulk(leg, i, j, m, n)]
                drop = tuple(k for k in range(5) if k not in keep)
                data = s.reshape([s.shape[k] for k in keep]) if drop else s
                verts[site_id(i, j)] = DenseTensor(tuple(LEGS[k] for k in keep), data)
                opens.append(OpenLeg(f"p{i:03d}_{j:03d}", site_id(i, j), "phys"))
                if i + 1 < m:
                    edges.append(Edge(f"v{i:03d}_{j:03d}", (site_id(i, j), "down"), (site_id(i + 1, j), "up")))
                if j + 1 < n:
                    edges.append(
                        Edge(f"h{i:03d}_{j:03d}", (site_id(i, j), "right"), (site_id(i, j + 1), "left"))
                    )
        return TensorNetwork(verts, edges, opens)

    def corner_id(self) -> str:
        return site_id(self.m - 1, self.n - 1)

    def to_dict(self) -> dict:
        doc = network_to_dict(self.to_network())
        doc["topology"] = {
            "type": "peps",
            "grid": [[site_id(i, j) for j in range(self.n)] for i in range(self.m)],
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Peps":
        topo = doc.get("topology") or {}
        if topo.get("type") != "peps":
            raise ValidationError("document has no PEPS topology block")
        tn = network_from_dict(doc)
        grid = []
        for row in topo["grid"]:
            out = []
            for v in row:
                t = tn.tensor(v)
                if not set(t.legs) <= set(LEGS) or "phys" not in t.legs:
                    raise ShapeError(f"vertex {v!r} legs {t.legs} are not PEPS legs")
                present = [l for l in LEGS if l in t.legs]
                shape = [t.dim(l) if l in t.legs else 1 for l in LEGS]
                out.append(t.transpose(present).data.reshape(shape))
            grid.append(tuple(out))
        return cls(tuple(grid))


def _is_bulk(leg, i, j, m, n) -> bool:
    return {
        "up": i > 0,
        "down": i < m - 1,
        "left": j > 0,
        "right": j < n - 1,
        "phys": True,
    }[leg]


def random_peps(m: int, n: int, D: int, p: int = 2, seed: SeedLike = None, dist=None) -> Peps:
    """Random grid with every interior bond of dimension ``D``."""
    if m < 1 or n < 1 or D < 1 or p < 1:
        raise ValidationError("m, n, D and p must be positive")
    rng = as_rng(seed)
    dist = Uniform() if dist is None else dist
    grid = []
    for i in range(m):
        row = []
        for j in range(n):
            shape = (
                D if i > 0 else 1,
                D if i < m - 1 else 1,
                D if j > 0 else 1,
                D if j < n - 1 else 1,
                p,
            )
            row.append(dist.sample(rng, shape))
        grid.append(tuple(row))
    return Peps(tuple(grid))


def _isometry(rng, rows: int, cols: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q


def canonical_peps_random(m: int, n: int, D: int, p: int = 2, seed: SeedLike = None) -> Peps:
    """Random PEPS canonical toward the lower-right corner, by stacked isometries.

    Off-center sites are isometries from ``(down, right)`` onto
    ``(up, left, phys)``; center-column sites above the corner map ``down``
    onto ``(up, left, phys)``. A site whose inputs outnumber its outputs gets
    a larger physical dimension than ``p`` so the isometry exists.
    """
    if m < 1 or n < 1 or D < 1 or p < 1:
        raise ValidationError("m, n, D and p must be positive")
    rng = as_rng(seed)
    grid = []
    for i in range(m):
        row = []
        for j in range(n):
            up = D if i > 0 else 1
            down = D if i < m - 1 else 1
            left = D if j > 0 else 1
            right = D if j < n - 1 else 1
            if i == m - 1 and j == n - 1:
                row.append(rng.uniform(-1.0, 1.0, (up, down, left, right, p)))
                continue
            inputs = down * right
            phys = max(p, -(-inputs // (up * left)))
            q = _isometry(rng, up * left * phys, inputs)
            site = q.reshape(up, left, phys, down, right).transpose(0, 3, 1, 4, 2)
            row.append(site)
        grid.append(tuple(row))
    return Peps(tuple(grid))


# -- reductions --------------------------------------------------------------

def fuse_column(sites, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Contract a column top-to-bottom into ``(∏ left, ∏ phys, ∏ right)``.

    Fused legs iterate row-major in row order, so neighbouring columns agree
    on their shared fused bond.
    """
    x = sites[0][0]  # (down, left, right, phys)
    for s in sites[1:]:
        d_next = s.shape[1]
        size = d_next * x[0].size * s.shape[2] * s.shape[3] * s.shape[4]
        if size > cap:
            raise TooLargeToMaterialize(size, cap, "fused PEPS column")
        y = np.einsum("ulrp,udLRP->dlLrRpP", x, s, optimize=True)
        d, l, L, r, R, pp, P = y.shape
        x = y.reshape(d, l * L, r * R, pp * P)
    return np.ascontiguousarray(x[0].transpose(0, 2, 1))


def columns_to_mps(p: Peps, cap: int = DEFAULT_CAP) -> Mps:
    """The chain whose site ``j`` is the contracted column ``j``."""
    return Mps(tuple(fuse_column([p.grid[i][j] for i in range(p.m)], cap) for j in range(p.n)))


def column_mps(p: Peps, j: int, center: int | None = None) -> Mps:
    """Column ``j`` as a vertical chain; the physical leg fuses ``(left, right, phys)``."""
    if not 0 <= j < p.n:
        raise ValidationError(f"column {j} out of range")
    sites = []
    for i in range(p.m):
        s = p.grid[i][j]
        up, down, left, right, ph = s.shape
        sites.append(s.transpose(0, 2, 3, 4, 1).reshape(up, left * right * ph, down))
    return Mps(tuple(sites), center)


def is_canonical_peps(p: Peps, tol: float = CANONICAL_TOL, cap: int = DEFAULT_CAP) -> bool:
    """Whether the environment of the lower-right corner is an isometry.

    Checked on the full network when its environment fits under ``cap``;
    otherwise through the sufficient columnwise test (fused columns
    left-orthogonal and the last column canonical at its bottom site).
    """
    try:
        return is_canonical(p.to_network(), p.corner_id(), tol, cap)
    except TooLargeToMaterialize:
        pass
    chain = columns_to_mps(p, cap)
    for s in chain.sites[:-1]:
        dl, ph, dr = s.shape
        a = s.reshape(dl * ph, dr)
        if np.max(np.abs(a.T @ a - np.eye(dr))) > tol:
            return False
    return is_canonical_mps(column_mps(p, p.n - 1), p.m - 1, tol)


# -- bounds ------------------------------------------------------------------

def _check_eps(eps1, eps2):
    if eps1 < 0 or eps2 < 0:
        raise ValidationError("eps1 and eps2 must be nonnegative")


def peps_bound_general(p: Peps, eps1: float, eps2: float, cap: int = DEFAULT_CAP) -> float:
    """Worst-case relative error bound for an ``(eps1, eps2)``-perturbation.

    Columns ``j < n-1`` contribute ``eps1 ‖left‖₂ ‖B_j‖_F ‖right‖₂ / ‖T‖_F``;
    the last column contributes its own sitewise MPS bound (with ``eps2``)
    times ``‖left block‖₂ ‖B_{n-1}‖_F / ‖T‖_F``.
    """
    _check_eps(eps1, eps2)
    chain = columns_to_mps(p, cap)
    bn = block_norms(chain)
    amp = [
        bn.left_block[j] * np.linalg.norm(chain.sites[j]) * bn.right_block[j + 1] / bn.frob
        for j in range(p.n)
    ]
    last = all_site_bound_general(column_mps(p, p.n - 1), eps2)
    return float(eps1 * sum(amp[:-1]) + last * amp[-1])


def peps_bound_canonical(p: Peps, eps1: float, eps2: float, cap: int = DEFAULT_CAP) -> tuple:
    """``(exact_sum, simple)`` for a PEPS canonical toward the lower-right corner.

    ``exact_sum`` weights column ``j`` by ``∏_i sqrt(D_ij)`` (the fused right
    bond) times ``‖C^{(·,[j+1,n-1])}_←‖₂ / ‖C‖_F``; ``simple`` is
    ``eps1(1 + (n−1)D^{m/2})`` with ``D`` the largest horizontal bond. The
    last column enters through the canonical MPS bound in both.
    """
    _check_eps(eps1, eps2)
    if not is_canonical_peps(p, cap=cap):
        raise NotCanonical("PEPS is not canonical toward the lower-right corner")
    chain = columns_to_mps(p, cap)
    bn = block_norms(chain)
    hd = p.horizontal_dims
    exact = 0.0
    for j in range(p.n - 1):
        exact += np.sqrt(np.prod(hd[:, j], dtype=float)) * bn.right_block[j + 1] / bn.frob
    col_exact, col_simple = all_site_bound_canonical(column_mps(p, p.n - 1, p.m - 1), eps2)
    D = int(hd.max()) if hd.size else 1
    simple = 1.0 + (p.n - 1) * D ** (p.m / 2.0)
    return float(eps1 * exact + col_exact), float(eps1 * simple + col_simple)


def comparison_factor_peps(m: int, n: int, D: float, eps1: float, eps2: float) -> float:
    _check_eps(eps1, eps2)
    denom = eps1 * (n - 1) + eps2 * m
    if denom == 0:
        raise InvalidPerturbationBudget("eps1 (n-1) + eps2 m is zero")
    num = eps1 * (1.0 + (n - 1) * D ** (m / 2.0)) + eps2 * (1.0 + (m - 1) * np.sqrt(D))
    return float(num / denom)


# -- mixed perturbations -----------------------------------------------------

@dataclass(eq=False)
class PepsPerturbation:
    """``columns[j]`` perturbs fused column ``j < n-1``; ``sites[i]`` perturbs ``(i, n-1)``."""

    columns: dict
    sites: dict


def sample_peps_perturbation(
    p: Peps, eps1: float, eps2: float, seed: SeedLike, cap: int = DEFAULT_CAP
) -> PepsPerturbation:
    """Saturated random ``(eps1, eps2)``-perturbation."""
    _check_eps(eps1, eps2)
    rng = as_rng(seed)
    cols = {}
    for j in range(p.n - 1):
        b = fuse_column([p.grid[i][j] for i in range(p.m)], cap)
        d = rng.uniform(-1.0, 1.0, b.shape)
        cols[j] = eps1 * np.linalg.norm(b) * d / np.linalg.norm(d)
    sites = {}
    for i in range(p.m):
        s = p.grid[i][p.n - 1]
        d = rng.uniform(-1.0, 1.0, s.shape)
        sites[i] = eps2 * np.linalg.norm(s) * d / np.linalg.norm(d)
    return PepsPerturbation(cols, sites)


def perturbed_chain(p: Peps, pert: PepsPerturbation, cap: int = DEFAULT_CAP) -> Mps:
    chain = list(columns_to_mps(p, cap).sites)
    for j, d in pert.columns.items():
        if not 0 <= j < p.n - 1 or d.shape != chain[j].shape:
            raise ShapeError(f"column perturbation {j} does not match the fused column")
    for j, d in pert.columns.items():
        chain[j] = chain[j] + d
    if pert.sites:
        col = [p.grid[i][p.n - 1] for i in range(p.m)]
        for i, d in pert.sites.items():
            if d.shape != col[i].shape:
                raise ShapeError(f"site perturbation ({i}, {p.n - 1}) has the wrong shape")
            col[i] = col[i] + d
        chain[-1] = fuse_column(col, cap)
    return Mps(tuple(chain))


def measure_peps_error(p: Peps, pert: PepsPerturbation, cap: int = DEFAULT_CAP) -> tuple:
    """Exact ``(ℰ_a, ℰ_r)`` of a mixed perturbation."""
    base = columns_to_mps(p, cap)
    err = base.distance(perturbed_chain(p, pert, cap), cap)
    ref = base.norm()
    return err, (err / ref if ref > 0 else float("inf"))
