"""Dense multiway arrays with named legs.

Everything downstream (networks, environments, MPS/PEPS helpers) is built on
:class:`DenseTensor` and :class:`Matricization`. Flattening is always row-major
over the leg order the caller supplies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionError,
    LegNotFound,
    PartitionError,
    TooLargeToMaterialize,
    ValidationError,
)

DEFAULT_CAP = 2**26
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """A real multiway array whose axes are addressed by leg id.

    Attributes:
        legs: Leg identifiers, one per axis, pairwise distinct.
        data: Array with ``data.ndim == len(legs)``. Stored read-only.
    """

    legs: tuple
    data: np.ndarray

    def __post_init__(self):
        legs = tuple(self.legs)
        data = np.array(self.data, dtype=float)
        if data.ndim != len(legs):
            raise DimensionError(f"{len(legs)} legs given for an order-{data.ndim} array")
        if len(set(legs)) != len(legs):
            raise ValidationError(f"duplicate leg ids in {legs}")
        if any(d < 1 for d in data.shape):
            raise DimensionError(f"leg dimensions must be positive, got {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "legs", legs)
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def dim(self, leg) -> int:
        return self.data.shape[self.axis(leg)]

    def axis(self, leg) -> int:
        try:
            return self.legs.index(leg)
        except ValueError:
            raise LegNotFound(f"leg {leg!r} not in {self.legs}") from None

    def leg_dims(self) -> dict:
        return dict(zip(self.legs, self.data.shape))

    def transpose(self, legs: Sequence) -> "DenseTensor":
        legs = tuple(legs)
        if sorted(map(repr, legs)) != sorted(map(repr, self.legs)):
            raise PartitionError(f"{legs} is not a permutation of {self.legs}")
        return DenseTensor(legs, np.transpose(self.data, [self.axis(l) for l in legs]))

    def relabel(self, mapping: dict) -> "DenseTensor":
        return DenseTensor(tuple(mapping.get(l, l) for l in self.legs), self.data)

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __add__(self, other: "DenseTensor") -> "DenseTensor":
        other = other.transpose(self.legs)
        return DenseTensor(self.legs, self.data + other.data)

    def __sub__(self, other: "DenseTensor") -> "DenseTensor":
        other = other.transpose(self.legs)
        return DenseTensor(self.legs, self.data - other.data)

    def __mul__(self, alpha: float) -> "DenseTensor":
        return DenseTensor(self.legs, alpha * self.data)

    __rmul__ = __mul__

    def __repr__(self):
        return f"DenseTensor(legs={self.legs}, dims={self.dims})"


@dataclass(frozen=True, eq=False)
class Matricization:
    """View of a tensor as a matrix: rows over ``row_legs``, columns over ``col_legs``."""

    source: DenseTensor
    row_legs: tuple
    col_legs: tuple
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rows, cols = tuple(self.row_legs), tuple(self.col_legs)
        legs = rows + cols
        if len(set(legs)) != len(legs) or set(legs) != set(self.source.legs):
            raise PartitionError(
                f"rows {rows} and cols {cols} do not partition legs {self.source.legs}"
            )
        t = self.source.transpose(legs)
        nrow = int(np.prod([self.source.dim(l) for l in rows], dtype=np.int64))
        ncol = int(np.prod([self.source.dim(l) for l in cols], dtype=np.int64))
        mat = t.data.reshape(nrow, ncol)
        mat.setflags(write=False)
        object.__setattr__(self, "row_legs", rows)
        object.__setattr__(self, "col_legs", cols)
        object.__setattr__(self, "matrix", mat)

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    @property
    def row_dims(self) -> tuple:
        return tuple(self.source.dim(l) for l in self.row_legs)

    @property
    def col_dims(self) -> tuple:
        return tuple(self.source.dim(l) for l in self.col_legs)

    def to_tensor(self) -> DenseTensor:
        """Undo the matricization (legs come back in row+col order)."""
        data = self.matrix.reshape(self.row_dims + self.col_dims)
        return DenseTensor(self.row_legs + self.col_legs, data)


def contract_pair(a: DenseTensor, b: DenseTensor, pairs: Sequence[tuple]) -> DenseTensor:
    """Sum over paired legs of ``a`` and ``b``.

    The result carries the unpaired legs of ``a`` followed by those of ``b``.
    An empty ``pairs`` list gives the outer product.
    """
    pairs = list(pairs)
    la = [p[0] for p in pairs]
    lb = [p[1] for p in pairs]
    if len(set(la)) != len(la) or len(set(lb)) != len(lb):
        raise ValidationError("a leg may be paired at most once")
    ax_a = [a.axis(l) for l in la]
    ax_b = [b.axis(l) for l in lb]
    for l1, l2, i, j in zip(la, lb, ax_a, ax_b):
        if a.dims[i] != b.dims[j]:
            raise DimensionError(f"paired legs {l1!r}/{l2!r} have dims {a.dims[i]} != {b.dims[j]}")
    out_legs = tuple(l for l in a.legs if l not in la) + tuple(l for l in b.legs if l not in lb)
    if len(set(out_legs)) != len(out_legs):
        raise ValidationError(f"contraction would produce duplicate legs {out_legs}")
    data = np.tensordot(a.data, b.data, axes=(ax_a, ax_b))
    return DenseTensor(out_legs, data)


def matricize(t: DenseTensor, row_legs: Sequence, col_legs: Sequence) -> Matricization:
    return Matricization(t, tuple(row_legs), tuple(col_legs))


def frobenius_norm(t: DenseTensor | Matricization | np.ndarray) -> float:
    if isinstance(t, Matricization):
        t = t.matrix
    elif isinstance(t, DenseTensor):
        t = t.data
    return float(np.linalg.norm(np.asarray(t).reshape(-1)))


def _power_iteration(apply, dim: int, tol: float, max_iter: int, seed: SeedLike = 0) -> float:
    """Largest eigenvalue of a symmetric PSD operator given by ``apply``.

    Starts from the normalized all-ones vector; if that start is annihilated
    (orthogonal to the range) the iteration restarts once from a seeded random
    vector. Convergence: relative change of the Rayleigh quotient below ``tol``.
    """
    starts = [np.full(dim, 1.0 / np.sqrt(dim))]
    best = 0.0
    for attempt in range(2):
        v = starts[0] if attempt == 0 else as_rng(seed).standard_normal(dim)
        v = v / np.linalg.norm(v)
        w = apply(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            if attempt == 0:
                continue
            return 0.0
        rq = float(v @ w)
        for _ in range(max_iter):
            v = w / nw
            w = apply(v)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return 0.0
            new_rq = float(v @ w)
            best = max(best, new_rq)
            if abs(new_rq - rq) <= tol * abs(new_rq):
                return new_rq
            rq = new_rq
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} iterations", best=np.sqrt(best)
        )
    return 0.0


def spectral_norm(
    m: Matricization | np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> float:
    """Largest singular value by power iteration on the smaller Gram operator."""
    mat = m.matrix if isinstance(m, Matricization) else np.asarray(m, dtype=float)
    if mat.ndim != 2 or mat.size == 0:
        raise ValidationError("spectral_norm needs a nonempty matrix")
    nrow, ncol = mat.shape
    if ncol <= nrow:
        lam = _power_iteration(lambda v: mat.T @ (mat @ v), ncol, tol, max_iter)
    else:
        lam = _power_iteration(lambda v: mat @ (mat.T @ v), nrow, tol, max_iter)
    return float(np.sqrt(max(lam, 0.0)))


def gram_spectral_norm(
    gram: np.ndarray, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> float:
    """2-norm of a matrix ``X`` given only its Gram matrix ``X^T X``."""
    gram = np.asarray(gram, dtype=float)
    if gram.size == 1:
        return float(np.sqrt(max(gram.item(), 0.0)))
    lam = _power_iteration(lambda v: gram @ v, gram.shape[0], tol, max_iter)
    return float(np.sqrt(max(lam, 0.0)))


def kron(a: Matricization, b: Matricization, cap: int = DEFAULT_CAP) -> Matricization:
    """Kronecker product ``a ⊗ b`` as a matricization of the outer-product tensor.

    Rows iterate over ``a.row_legs + b.row_legs``, columns over
    ``a.col_legs + b.col_legs``; leg ids of ``a`` and ``b`` must be disjoint.
    """
    size = a.matrix.size * b.matrix.size
    if size > cap:
        raise TooLargeToMaterialize(size, cap, "Kronecker product")
    outer = contract_pair(a.source, b.source, [])
    return Matricization(outer, a.row_legs + b.row_legs, a.col_legs + b.col_legs)


@dataclass(frozen=True)
class Uniform:
    """Entries i.i.d. uniform on ``[lo, hi]``."""

    lo: float = -1.0
    hi: float = 1.0

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=shape)


@dataclass(frozen=True)
class CenteredUniform:
    """Entries i.i.d. uniform on ``[-σ√3, σ√3]`` (mean 0, variance σ²)."""

    sigma: float

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        half = self.sigma * np.sqrt(3.0)
        return rng.uniform(-half, half, size=shape)


def random_tensor(shape, dist=None, seed: SeedLike = None, legs: Sequence | None = None) -> DenseTensor:
    shape = tuple(int(d) for d in shape)
    if any(d < 1 for d in shape):
        raise DimensionError(f"dimensions must be positive, got {shape}")
    dist = Uniform() if dist is None else dist
    data = dist.sample(as_rng(seed), shape)
    legs = tuple(range(len(shape))) if legs is None else tuple(legs)
    return DenseTensor(legs, data)


def dist_from_dict(spec: dict):
    """Build a distribution from ``{"name": "uniform", "lo":..,"hi":..}`` style dicts."""
    name = spec.get("name", spec.get("type", "uniform"))
    if name == "uniform":
        return Uniform(float(spec.get("lo", -1.0)), float(spec.get("hi", 1.0)))
    if name in ("centered-uniform", "centered_uniform"):
        return CenteredUniform(float(spec["sigma"]))
    raise ValidationError(f"unknown distribution {name!r}")
