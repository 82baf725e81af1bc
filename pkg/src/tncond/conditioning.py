"""Condition numbers, worst-case bounds and the average-case error of a network."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DegenerateSite, ValidationError
from .network import TensorNetwork, contract_network, environment_matrix, jacobian_block
from .perturb import PerturbationSet
from .tensor import DEFAULT_CAP, DEFAULT_MAX_ITER, DEFAULT_TOL, SeedLike, as_rng


@dataclass(frozen=True)
class ConditionNumbers:
    kappa_abs: float
    kappa_rel: float
    site_norm_argmax: object
    site_norms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kappa_abs": self.kappa_abs,
            "kappa_rel": self.kappa_rel,
            "site_norm_argmax": self.site_norm_argmax,
            "site_norms": self.site_norms,
        }


@dataclass
class WorstCaseReport:
    bound: float
    solved_value: float
    per_site_norms: dict
    multipliers: dict
    argmax_perturbation: PerturbationSet
    frozen_sites: list = field(default_factory=list)
    iterations: int = 0

    @property
    def kkt_value(self) -> float:
        """``sqrt(Σ μ_i ε_i²)``; equals ``solved_value`` at a stationary point."""
        eps = {k: np.linalg.norm(v) for k, v in self.argmax_perturbation.entries.items()}
        return float(np.sqrt(sum(self.multipliers[k] * eps[k] ** 2 for k in eps)))

    def to_dict(self) -> dict:
        return {
            "bound": self.bound,
            "solved_value": self.solved_value,
            "kkt_value": self.kkt_value,
            "per_site_norms": self.per_site_norms,
            "multipliers": self.multipliers,
            "frozen_sites": self.frozen_sites,
            "iterations": self.iterations,
            "argmax_perturbation": self.argmax_perturbation.to_dict(),
        }


def _eps_map(tn: TensorNetwork, eps) -> dict:
    ids = tn.vertex_ids
    if isinstance(eps, dict):
        out = {v: float(eps.get(v, 0.0)) for v in ids}
    elif np.ndim(eps) == 0:
        out = {v: float(eps) for v in ids}
    else:
        eps = list(eps)
        if len(eps) != len(ids):
            raise ValidationError(f"{len(eps)} eps values for {len(ids)} vertices")
        out = dict(zip(ids, map(float, eps)))
    if any(e < 0 for e in out.values()):
        raise ValidationError("eps values must be nonnegative")
    return out


def site_environment_norms(
    tn: TensorNetwork, cap: int = DEFAULT_CAP, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> dict:
    """``‖M_{T^(v)}‖₂`` for every vertex ``v``."""
    return {v: environment_matrix(tn, {v}, cap).spectral_norm(tol, max_iter) for v in tn.vertex_ids}


def condition_numbers(tn: TensorNetwork, cap: int = DEFAULT_CAP, tol: float = DEFAULT_TOL) -> ConditionNumbers:
    norms = site_environment_norms(tn, cap, tol)
    arg = max(norms, key=norms.get)
    kappa = norms[arg]
    site_sum = sum(np.linalg.norm(t.data) for t in tn.vertices.values())
    total = np.linalg.norm(contract_network(tn, cap).data)
    return ConditionNumbers(float(kappa), float(site_sum / total * kappa), arg, norms)


def worst_case_bound(tn: TensorNetwork, eps, norms: dict | None = None, cap: int = DEFAULT_CAP) -> float:
    """``Σ ε_i ‖M_{T^(i)}‖₂``; ``eps`` is a scalar, a per-vertex dict or a list."""
    e = _eps_map(tn, eps)
    norms = site_environment_norms(tn, cap) if norms is None else norms
    return float(sum(e[v] * norms[v] for v in tn.vertex_ids))


def _stationary_ascent(blocks, eps, a, tol, max_iter, rng):
    """Block ascent on ``‖Σ J_i a_i‖`` over ``‖a_i‖ = ε_i``.

    Every sweep maximizes the linearization at the current point, so the
    objective never decreases.
    """
    keys = list(blocks)
    frozen = set()
    y = sum(blocks[k] @ a[k] for k in keys)
    f = float(np.linalg.norm(y))
    for it in range(1, max_iter + 1):
        if f == 0.0:
            for k in keys:
                a[k] = eps[k] * _rand_unit(rng, a[k].shape[0])
            y = sum(blocks[k] @ a[k] for k in keys)
            f = float(np.linalg.norm(y))
            if f == 0.0:
                return a, 0.0, frozen, it
        r = y / f
        for k in keys:
            if eps[k] == 0.0:
                continue
            g = blocks[k].T @ r
            ng = np.linalg.norm(g)
            if ng <= 1e-300:
                if k not in frozen:
                    frozen.add(k)
                    a[k] = eps[k] * _rand_unit(rng, a[k].shape[0])
                continue
            a[k] = eps[k] * g / ng
        y = sum(blocks[k] @ a[k] for k in keys)
        f_new = float(np.linalg.norm(y))
        if f_new - f <= tol * max(f_new, 1e-300):
            return a, max(f, f_new), frozen, it
        f = f_new
    raise ConvergenceError(f"worst-case ascent did not settle in {max_iter} sweeps", best=(a, f, frozen))


def _rand_unit(rng, d):
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x)


def worst_case_solve(
    tn: TensorNetwork,
    eps,
    tol: float = 1e-12,
    max_iter: int = DEFAULT_MAX_ITER,
    restarts: int = 5,
    seed: SeedLike = 0,
    cap: int = DEFAULT_CAP,
    dependent=(),
) -> WorstCaseReport:
    """First-order worst-case absolute error under per-site budgets ``eps``.

    Runs ``restarts`` seeded block-ascent runs (the first from each block's
    top right singular vector) and keeps the best stationary value. Global
    optimality is not guaranteed.

    ``dependent`` lists vertex groups whose perturbations are tied to each
    other; such coupled problems are not supported and are rejected.
    """
    if dependent:
        raise ValidationError("perturbations declared dependent are not supported by the solver")
    e = _eps_map(tn, eps)
    blocks = {v: jacobian_block(tn, v, cap) for v in tn.vertex_ids}
    norms = {v: float(np.linalg.norm(b, 2)) for v, b in blocks.items()}
    bound = float(sum(e[v] * norms[v] for v in blocks))
    rng = as_rng(seed)
    best = None
    for r in range(max(restarts, 1)):
        if r == 0:
            a = {}
            for v, b in blocks.items():
                _, _, vt = np.linalg.svd(b, full_matrices=False)
                a[v] = e[v] * vt[0]
        else:
            a = {v: e[v] * _rand_unit(rng, b.shape[1]) for v, b in blocks.items()}
        a, value, frozen, its = _stationary_ascent(blocks, e, a, tol, max_iter, rng)
        if best is None or value > best[1]:
            best = (dict(a), value, frozen, its)
    a, value, frozen, its = best
    y = sum(blocks[v] @ a[v] for v in blocks)
    mult = {}
    for v, b in blocks.items():
        mult[v] = float(a[v] @ (b.T @ y) / e[v] ** 2) if e[v] > 0 else 0.0
    shapes = {v: t.dims for v, t in tn.vertices.items()}
    pset = PerturbationSet({v: a[v].reshape(shapes[v]) for v in blocks}, "explicit")
    return WorstCaseReport(bound, value, norms, mult, pset, sorted(frozen, key=str), its)


def entrywise_normalize(tn: TensorNetwork) -> TensorNetwork:
    """Rescale every site to Frobenius norm ``sqrt(#entries)``."""
    updates = {}
    for v, t in tn.vertices.items():
        nrm = np.linalg.norm(t.data)
        if nrm == 0.0:
            raise DegenerateSite(f"vertex {v!r} has zero norm")
        updates[v] = t.data * (np.sqrt(t.size) / nrm)
    return tn.replace(updates)


def environment_frobenius_sq(tn: TensorNetwork, cap: int = DEFAULT_CAP) -> float:
    """``‖M_T‖_F² = Σ_i ‖M_{T^(i)}‖_F²``."""
    return float(sum(environment_matrix(tn, {v}, cap).frobenius_norm() ** 2 for v in tn.vertex_ids))


def average_case_error(
    tn: TensorNetwork, *, sigma: float | None = None, eps: float | None = None, cap: int = DEFAULT_CAP
) -> float:
    """Leading-order prediction of ``E ℰ_r²``.

    ``sigma``: every entry perturbed with variance σ², giving
    ``σ² ‖M_T‖_F² / ‖T‖_F²``. ``eps``: relative budget ``E‖δ_i‖² = ε²‖T_i‖²``,
    evaluated on the entrywise-normalized network.
    """
    if (sigma is None) == (eps is None):
        raise ValidationError("give exactly one of sigma or eps")
    scale = sigma if sigma is not None else eps
    if scale < 0:
        raise ValidationError("magnitude must be nonnegative")
    if scale == 0:
        return 0.0
    net = tn if sigma is not None else entrywise_normalize(tn)
    total_sq = float(np.sum(contract_network(net, cap).data ** 2))
    return scale**2 * environment_frobenius_sq(net, cap) / total_sq
