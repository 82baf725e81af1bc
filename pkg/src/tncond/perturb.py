"""Sitewise perturbations: sampling, application, exact error measurement.

Targets are either a :class:`~tncond.network.TensorNetwork` (sites keyed by
vertex id) or an :class:`~tncond.mps.Mps` (sites keyed by integer index).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError
from .network import TensorNetwork, contract_network
from .tensor import DEFAULT_CAP, CenteredUniform, SeedLike, as_rng


def site_arrays(target) -> dict:
    if isinstance(target, TensorNetwork):
        return {v: t.data for v, t in target.vertices.items()}
    return target.site_arrays()


@dataclass(eq=False)
class PerturbationSet:
    """One perturbation tensor per perturbed site.

    ``model`` is ``"eps"`` (relative Frobenius budget ``magnitude``),
    ``"variance"`` (entrywise variance ``magnitude**2``) or ``"explicit"``.
    """

    entries: dict
    model: str = "explicit"
    magnitude: float | None = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = {k: np.asarray(v, dtype=float) for k, v in self.entries.items()}
        if self.model not in ("eps", "variance", "explicit"):
            raise ValidationError(f"unknown perturbation model {self.model!r}")

    def check_shapes(self, target) -> None:
        arrays = site_arrays(target)
        for k, d in self.entries.items():
            if k not in arrays:
                raise ShapeError(f"perturbation for unknown site {k!r}")
            if d.shape != arrays[k].shape:
                raise ShapeError(f"site {k!r}: perturbation shape {d.shape} != {arrays[k].shape}")

    def scaled(self, t: float) -> "PerturbationSet":
        mag = None if self.magnitude is None else self.magnitude * abs(t)
        return PerturbationSet({k: t * v for k, v in self.entries.items()}, self.model, mag)

    def __neg__(self):
        return self.scaled(-1.0)

    def norms(self) -> dict:
        return {k: float(np.linalg.norm(v)) for k, v in self.entries.items()}

    def relative_norms(self, target) -> dict:
        arrays = site_arrays(target)
        return {k: float(np.linalg.norm(v) / np.linalg.norm(arrays[k])) for k, v in self.entries.items()}

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "magnitude": self.magnitude,
            "entries": [
                {"site": k, "shape": list(v.shape), "data": v.reshape(-1).tolist()}
                for k, v in self.entries.items()
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PerturbationSet":
        entries = {
            e["site"]: np.asarray(e["data"], dtype=float).reshape(e["shape"]) for e in doc["entries"]
        }
        return cls(entries, doc.get("model", "explicit"), doc.get("magnitude"))


def random_directions(target, seed: SeedLike, sites=None) -> dict:
    """Unit-Frobenius directions, entrywise uniform on [-1, 1] before normalizing."""
    rng = as_rng(seed)
    arrays = site_arrays(target)
    keys = list(arrays) if sites is None else list(sites)
    out = {}
    for k in keys:
        d = rng.uniform(-1.0, 1.0, size=arrays[k].shape)
        out[k] = d / np.linalg.norm(d)
    return out


def sample_eps_perturbation(
    target, eps: float, seed: SeedLike, saturate: bool = True, sites=None
) -> PerturbationSet:
    """Random ε-perturbation.

    With ``saturate`` every site gets exactly ``ε‖T_i‖_F``; otherwise the
    radius is drawn uniformly from ``[0, ε‖T_i‖_F]``.
    """
    if eps < 0:
        raise ValidationError("eps must be nonnegative")
    rng = as_rng(seed)
    arrays = site_arrays(target)
    dirs = random_directions(target, rng, sites)
    entries = {}
    for k, d in dirs.items():
        radius = eps * np.linalg.norm(arrays[k])
        if not saturate:
            radius *= rng.uniform()
        entries[k] = radius * d
    return PerturbationSet(entries, "eps", eps)


def scale_directions(target, directions: dict, eps: float) -> PerturbationSet:
    """Scale given unit directions so each site's relative size is exactly ``eps``."""
    arrays = site_arrays(target)
    entries = {}
    for k, d in directions.items():
        if d.shape != arrays[k].shape:
            raise ShapeError(f"site {k!r}: direction shape {d.shape} != {arrays[k].shape}")
        entries[k] = eps * np.linalg.norm(arrays[k]) * d / np.linalg.norm(d)
    return PerturbationSet(entries, "eps", eps)


def sample_variance_perturbation(target, sigma: float, seed: SeedLike, sites=None) -> PerturbationSet:
    """I.i.d. centered-uniform entries with variance ``sigma**2`` on every site."""
    if sigma < 0:
        raise ValidationError("sigma must be nonnegative")
    rng = as_rng(seed)
    arrays = site_arrays(target)
    keys = list(arrays) if sites is None else list(sites)
    dist = CenteredUniform(sigma)
    entries = {k: dist.sample(rng, arrays[k].shape) for k in keys}
    return PerturbationSet(entries, "variance", sigma)


def apply(target, pset: PerturbationSet):
    """Perturbed copy of ``target``; the original is left untouched."""
    pset.check_shapes(target)
    if isinstance(target, TensorNetwork):
        return target.replace({k: target.tensor(k).data + d for k, d in pset.entries.items()})
    return target.perturbed(pset.entries)


def measure_error(target, pset: PerturbationSet, cap: int = DEFAULT_CAP) -> tuple:
    """Exact ``(ℰ_a, ℰ_r)`` of the perturbed network against the original."""
    perturbed = apply(target, pset)
    if isinstance(target, TensorNetwork):
        t = contract_network(target, cap).flat()
        th = contract_network(perturbed, cap).flat()
        err = float(np.linalg.norm(th - t))
        ref = float(np.linalg.norm(t))
    else:
        err = target.distance(perturbed, cap)
        ref = target.norm()
    return err, (err / ref if ref > 0 else float("inf"))
