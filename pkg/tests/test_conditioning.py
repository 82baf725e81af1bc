from __future__ import annotations

import json
import string

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import einsum_contract, random_network
from tncond.conditioning import (
    average_case_error,
    condition_numbers,
    entrywise_normalize,
    environment_frobenius_sq,
    site_environment_norms,
    worst_case_bound,
    worst_case_solve,
)
from tncond.errors import DegenerateSite, ValidationError
from tncond.mps import Mps
from tncond.network import Edge, OpenLeg, TensorNetwork, contract_network, environment_matrix
from tncond.perturb import measure_error, sample_variance_perturbation
from tncond.tensor import DenseTensor


def chain2(a, b):
    return TensorNetwork(
        {"A": DenseTensor(("o0", "e"), a), "B": DenseTensor(("e", "o1"), b)},
        [Edge("e", ("A", "e"), ("B", "e"))],
        [OpenLeg("o0", "A", "o0"), OpenLeg("o1", "B", "o1")],
    )


def product_state(n, p, seed):
    rng = np.random.default_rng(seed)
    return Mps([rng.uniform(-1, 1, (1, p, 1)) for _ in range(n)]).to_network()


class TestConditionNumbers:
    def test_single_vertex(self):
        tn = TensorNetwork({"A": DenseTensor(("x", "y"), np.ones((2, 3)))}, [], [OpenLeg("x", "A", "x"), OpenLeg("y", "A", "y")])
        assert condition_numbers(tn).kappa_abs == pytest.approx(1.0)

    def test_two_chain(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
        c = condition_numbers(chain2(a, b))
        assert c.kappa_abs == pytest.approx(max(np.linalg.norm(a, 2), np.linalg.norm(b, 2)), rel=1e-8)
        assert c.site_norms["A"] == pytest.approx(np.linalg.norm(b, 2), rel=1e-8)
        ratio = (np.linalg.norm(a) + np.linalg.norm(b)) / np.linalg.norm(a @ b)
        assert c.kappa_rel == pytest.approx(ratio * c.kappa_abs, rel=1e-12)

    def test_relabeling_invariance(self):
        tn = random_network(3)
        vm = {v: f"x_{v}" for v in tn.vertex_ids}
        em = {e.id: f"z{e.id}" for e in tn.edges}
        a, b = condition_numbers(tn), condition_numbers(tn.relabel(vm, em))
        assert b.kappa_abs == pytest.approx(a.kappa_abs, rel=1e-10)
        assert b.site_norm_argmax == vm[a.site_norm_argmax]

    def test_serializes(self):
        json.dumps(condition_numbers(random_network(1)).to_dict())


class TestBound:
    def test_zero_eps(self):
        assert worst_case_bound(random_network(4), 0.0) == 0.0

    def test_single_term(self):
        tn = random_network(5)
        norms = site_environment_norms(tn)
        v = tn.vertex_ids[-1]
        assert worst_case_bound(tn, {v: 0.3}) == pytest.approx(0.3 * norms[v])

    def test_eps_list_and_validation(self):
        tn = random_network(6, n_vertices=3)
        norms = site_environment_norms(tn)
        eps = [0.1, 0.2, 0.3]
        ref = sum(e * norms[v] for e, v in zip(eps, tn.vertex_ids))
        assert worst_case_bound(tn, eps) == pytest.approx(ref)
        with pytest.raises(ValidationError):
            worst_case_bound(tn, [0.1, 0.2])
        with pytest.raises(ValidationError):
            worst_case_bound(tn, -1.0)


class TestSolver:
    def test_kkt_identity(self):
        tn = random_network(7)
        rep = worst_case_solve(tn, 1e-2, seed=1)
        assert rep.solved_value <= rep.bound * (1 + 1e-9)
        assert rep.kkt_value == pytest.approx(rep.solved_value, rel=1e-6)
        assert all(m >= -1e-12 for m in rep.multipliers.values())
        json.dumps(rep.to_dict())

    def test_argmax_has_the_budgets(self):
        tn = random_network(8)
        eps = {v: 0.01 * (i + 1) for i, v in enumerate(tn.vertex_ids)}
        rep = worst_case_solve(tn, eps, seed=2)
        for v, n in rep.argmax_perturbation.norms().items():
            assert n == pytest.approx(eps[v], rel=1e-12)

    def test_single_site_equals_bound(self):
        tn = random_network(9)
        v = tn.vertex_ids[0]
        rep = worst_case_solve(tn, {v: 0.05}, seed=3)
        assert rep.solved_value == pytest.approx(worst_case_bound(tn, {v: 0.05}), rel=1e-8)

    def test_product_state_explicit_perturbation(self):
        tn = product_state(4, 3, seed=0)
        eps = 1e-3
        rep = worst_case_solve(tn, {v: eps * np.linalg.norm(t.data) for v, t in tn.vertices.items()}, seed=0)
        explicit = {v: eps * t.data for v, t in tn.vertices.items()}
        base = einsum_contract(tn)
        # first-order value of the explicit perturbation
        lin = sum(einsum_contract(tn, replace={v: d}) for v, d in explicit.items())
        assert rep.solved_value >= np.linalg.norm(lin) * (1 - 1e-10)
        assert np.linalg.norm(lin) == pytest.approx(4 * eps * np.linalg.norm(base), rel=1e-10)

    def test_random_search_oracle(self):
        # 3 vertices, dims <= 3; no random feasible perturbation beats the solver
        tn = random_network(11, n_vertices=3, max_dim=3)
        eps = 1e-3
        rep = worst_case_solve(tn, eps, seed=4)
        rng = np.random.default_rng(0)
        base = einsum_contract(tn)
        best = 0.0
        k = 10**5
        batch = 10**4
        for _ in range(k // batch):
            deltas = {}
            for v, t in tn.vertices.items():
                d = rng.standard_normal(t.dims + (batch,))
                d *= eps / np.linalg.norm(d.reshape(-1, batch), axis=0)
                deltas[v] = d
            # exact error of joint perturbation, batched through one einsum per sample chunk
            pert = _batched_joint(tn, deltas, batch)
            err = np.linalg.norm((pert - base[..., None]).reshape(-1, batch), axis=0)
            best = max(best, float(err.max()))
        assert best <= rep.solved_value + 10 * eps**2 * max(rep.bound / eps, 1.0)

    @given(st.integers(0, 10**5), st.floats(1e-4, 1e-1), st.floats(1.0, 3.0))
    @settings(max_examples=15, deadline=None)
    def test_monotone_in_eps(self, seed, eps, factor):
        tn = random_network(seed, n_vertices=3, max_dim=3)
        v = tn.vertex_ids[seed % 3]
        lo = {w: eps for w in tn.vertex_ids}
        hi = dict(lo, **{v: eps * factor})
        a = worst_case_solve(tn, lo, seed=seed).solved_value
        b = worst_case_solve(tn, hi, seed=seed).solved_value
        assert b >= a * (1 - 1e-9)

    def test_first_order_accuracy(self):
        tn = random_network(12)
        rep = worst_case_solve(tn, 1.0, seed=5)
        rem = []
        for t in (1e-3, 1e-4, 1e-5):
            err, _ = measure_error(tn, rep.argmax_perturbation.scaled(t))
            rem.append(abs(err - t * rep.solved_value))
        # remainder decays at least quadratically (allowing for rounding at the smallest t)
        assert rem[1] <= rem[0] / 50 + 1e-13
        assert rem[2] <= rem[1] / 50 + 1e-13

    def test_dependent_rejected(self):
        tn = random_network(13)
        with pytest.raises(ValidationError):
            worst_case_solve(tn, 0.1, dependent=[tuple(tn.vertex_ids[:2])])

    def test_zero_block_is_frozen(self):
        # B's environment is zero because A vanishes
        a = np.zeros((2, 2))
        b = np.ones((2, 2))
        rep = worst_case_solve(chain2(a, b), 0.1, seed=0)
        assert "B" in rep.frozen_sites
        assert rep.solved_value == pytest.approx(0.1 * np.linalg.norm(b, 2))


def _batched_joint(tn, deltas, batch):
    """Contraction with every vertex perturbed, one sample per trailing index."""
    letters = iter(string.ascii_letters)
    sym = {}
    for e in tn.edges:
        sym[e.a] = sym[e.b] = next(letters)
    for o in tn.open_legs:
        sym[(o.vertex, o.leg)] = next(letters)
    out = "".join(sym[(o.vertex, o.leg)] for o in sorted(tn.open_legs, key=lambda o: o.id))
    z = next(letters)
    ops, subs = [], []
    for v, t in tn.vertices.items():
        ops.append(t.data[..., None] + deltas[v])
        subs.append("".join(sym[(v, l)] for l in t.legs) + z)
    return np.einsum(",".join(subs) + "->" + out + z, *ops, optimize=True)


class TestNormalize:
    def test_norms(self):
        tn = random_network(14)
        out = entrywise_normalize(tn)
        for t in out.vertices.values():
            assert np.linalg.norm(t.data) == pytest.approx(np.sqrt(t.size))

    def test_idempotent_and_scale_invariant(self):
        tn = random_network(15)
        once = entrywise_normalize(tn)
        v = tn.vertex_ids[0]
        scaled = tn.replace({v: 7 * tn.tensor(v).data})
        for net in (entrywise_normalize(once), entrywise_normalize(scaled)):
            for w in tn.vertex_ids:
                np.testing.assert_allclose(net.tensor(w).data, once.tensor(w).data, rtol=1e-12)

    def test_contraction_scales(self):
        tn = random_network(16)
        factor = np.prod([np.sqrt(t.size) / np.linalg.norm(t.data) for t in tn.vertices.values()])
        np.testing.assert_allclose(
            contract_network(entrywise_normalize(tn)).data, factor * contract_network(tn).data, rtol=1e-10
        )

    def test_zero_site(self):
        tn = chain2(np.zeros((2, 2)), np.ones((2, 2)))
        with pytest.raises(DegenerateSite):
            entrywise_normalize(tn)


class TestAverageCase:
    def test_zero_sigma(self):
        assert average_case_error(random_network(17), sigma=0.0) == 0.0

    def test_exactly_one_mode(self):
        tn = random_network(17)
        with pytest.raises(ValidationError):
            average_case_error(tn)
        with pytest.raises(ValidationError):
            average_case_error(tn, sigma=1.0, eps=1.0)

    def test_two_chain_by_hand(self):
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal((3, 2)), rng.standard_normal((2, 4))
        tn = chain2(a, b)
        # M_A = Bᵀ ⊗ I_3, M_B = A ⊗ I_4
        m_sq = 3 * np.linalg.norm(b) ** 2 + 4 * np.linalg.norm(a) ** 2
        assert environment_frobenius_sq(tn) == pytest.approx(m_sq)
        sigma = 1e-3
        assert average_case_error(tn, sigma=sigma) == pytest.approx(sigma**2 * m_sq / np.linalg.norm(a @ b) ** 2)

    def test_eps_mode_uses_normalized_network(self):
        tn = random_network(18)
        norm = entrywise_normalize(tn)
        assert average_case_error(tn, eps=1e-2) == pytest.approx(average_case_error(norm, sigma=1e-2))

    def test_monte_carlo(self):
        tn = random_network(19, n_vertices=3, max_dim=3)
        sigma = 1e-3
        pred = average_case_error(tn, sigma=sigma)
        rng = np.random.default_rng(7)
        vals = [measure_error(tn, sample_variance_perturbation(tn, sigma, rng))[1] ** 2 for _ in range(2000)]
        assert abs(np.mean(vals) / pred - 1) < 0.05

    def test_environment_frobenius_matches_materialized(self):
        tn = random_network(20)
        ref = sum(np.linalg.norm(environment_matrix(tn, {v}).materialize()) ** 2 for v in tn.vertex_ids)
        assert environment_frobenius_sq(tn) == pytest.approx(ref, rel=1e-12)
