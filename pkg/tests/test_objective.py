"""Alignment / uniformity losses, neighbor-mean targets, diagnostics."""

import math

import numpy as np
import pytest

from hypergrl import diffcore as dc
from hypergrl.encoder import init_params
from hypergrl.errors import ConfigError
from hypergrl.graphstore import augment, build_dataset, generate_sbm, identity_view
from hypergrl.objective import (AlignTargets, ObjectiveSettings, alignment_loss,
                                collapse_metric, entropy_proxy, neighbor_mean,
                                total_loss, uniformity_loss)

SIG1 = 1.0 / (1.0 + math.exp(-1.0))


def path_adj():
    return build_dataset(np.array([[0, 1], [1, 2]]), np.eye(3, dtype=np.float32)).adjacency


def t64(a):
    return dc.tensor(np.asarray(a, dtype=np.float64))


# ---------------------------------------------------------------------------
# neighbor_mean
# ---------------------------------------------------------------------------

def test_neighbor_mean_path_k1():
    z = t64([[1, 0], [0, 1], [1, 0]])
    tgt = neighbor_mean(z, path_adj(), k=1)
    assert np.allclose(tgt.mu.value, [[0, 1], [1, 0], [0, 1]], atol=1e-12)
    assert tgt.valid.all()


def test_neighbor_mean_path_k2():
    z = t64([[1, 0], [0, 1], [1, 0]])
    tgt = neighbor_mean(z, path_adj(), k=2)
    # after one round ends (0,1),(1,0),(0,1); b's second-round mean is (0,1)
    assert np.allclose(tgt.mu.value[1], [0, 1], atol=1e-12)
    assert np.allclose(tgt.mu.value[0], [1, 0], atol=1e-12)


def test_neighbor_mean_constant_neighborhood_fixed_point():
    v = np.array([0.6, 0.8])
    z = t64(np.tile(v, (5, 1)))
    adj = build_dataset(np.array([[0, 1], [1, 2], [2, 3], [3, 4], [0, 4]]),
                        np.eye(5, dtype=np.float32)).adjacency
    for k in (1, 2, 3):
        tgt = neighbor_mean(z, adj, k=k)
        assert np.allclose(tgt.mu.value, np.tile(v, (5, 1)), atol=1e-12)


def test_neighbor_mean_isolated_node_flagged():
    g = build_dataset(np.array([[0, 1]]), np.eye(3, dtype=np.float32))
    z = t64([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    tgt = neighbor_mean(z, g.adjacency, k=1)
    assert list(tgt.valid) == [True, True, False]
    assert np.allclose(tgt.mu.value[2], 0.0)  # zero row stays zero


def test_neighbor_mean_antipodal_degenerate_row_flagged():
    # b's neighbors cancel exactly -> zero mean, invalid
    z = t64([[1, 0], [0, 1], [-1, 0]])
    tgt = neighbor_mean(z, path_adj(), k=1)
    assert list(tgt.valid) == [True, False, True]
    assert np.allclose(tgt.mu.value[1], 0.0)


def test_neighbor_mean_rejects_k0():
    with pytest.raises(ConfigError):
        neighbor_mean(t64(np.eye(2)), path_adj(), k=0)


def test_neighbor_mean_self_inclusion():
    z = t64([[1, 0], [0, 1], [1, 0]])
    tgt = neighbor_mean(z, path_adj(), k=1, include_self=True)
    # a: mean of {a,b} = (0.5,0.5) -> normalized
    assert np.allclose(tgt.mu.value[0], [1, 1] / np.sqrt(2), atol=1e-12)


# ---------------------------------------------------------------------------
# alignment_loss
# ---------------------------------------------------------------------------

def test_alignment_zero_when_targets_match():
    z = t64([[1, 0], [0, 1], [1, 0]])
    tgt = AlignTargets(mu=dc.tensor(z.value.copy()), k=1,
                       valid=np.ones(3, dtype=bool))
    loss = alignment_loss(z, tgt, np.array([1, 2, 1]), tau=5.0)
    assert abs(float(loss.value)) < 1e-12


def test_alignment_single_edge_oracle():
    # single edge a-b with orthogonal embeddings: every term is
    # sigmoid(1)^5 * (1 - 0), giving a mean close to 0.2089
    g = build_dataset(np.array([[0, 1]]), np.eye(2, dtype=np.float32))
    z = t64([[1, 0], [0, 1]])
    tgt = neighbor_mean(z, g.adjacency, k=1)
    loss = alignment_loss(z, tgt, np.array([1, 1]), tau=5.0)
    expect = SIG1 ** 5
    assert float(loss.value) == pytest.approx(expect, abs=1e-12)
    assert expect == pytest.approx(0.2089, abs=1e-4)  # 0.73105857...^5


def test_alignment_degree10_weight_saturates():
    w = (1.0 / (1.0 + math.exp(-10.0))) ** 5
    assert w == pytest.approx(0.99977, abs=5e-6)
    z = t64([[1.0, 0.0]])
    tgt = AlignTargets(mu=t64([[0.0, 1.0]]), k=1, valid=np.ones(1, bool))
    loss = alignment_loss(z, tgt, np.array([10]), tau=5.0)
    assert float(loss.value) == pytest.approx(w, rel=1e-12)


def test_alignment_isolated_contributes_zero_denominator_stays_n():
    g = build_dataset(np.array([[0, 1]]), np.eye(4, dtype=np.float32))
    z = t64([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    tgt = neighbor_mean(z, g.adjacency, k=1)
    loss = alignment_loss(z, tgt, np.array([1, 1, 0, 0]), tau=5.0)
    # two live terms of sigmoid(1)^5, averaged over N=4
    assert float(loss.value) == pytest.approx(2 * SIG1 ** 5 / 4, rel=1e-12)


def test_alignment_tau_zero_uses_unit_weights():
    g = build_dataset(np.array([[0, 1]]), np.eye(2, dtype=np.float32))
    z = t64([[1, 0], [0, 1]])
    tgt = neighbor_mean(z, g.adjacency, k=1)
    loss = alignment_loss(z, tgt, np.array([1, 1]), tau=0.0)
    assert float(loss.value) == pytest.approx(1.0, rel=1e-12)


def test_alignment_within_bounds_random():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(2, 30))
        g = generate_sbm([max(2, n // 2), max(2, n - n // 2)], 0.4, 0.1, 0.2,
                         seed=int(rng.integers(1 << 30)))
        z = rng.normal(size=(g.num_nodes, 6))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        tgt = neighbor_mean(t64(z), g.adjacency, k=1)
        deg = np.diff(g.adjacency.indptr)
        val = float(alignment_loss(t64(z), tgt, deg, tau=5.0).value)
        assert 0.0 <= val <= 2.0


# ---------------------------------------------------------------------------
# uniformity / collapse / entropy
# ---------------------------------------------------------------------------

def test_uniformity_hand_values():
    assert float(uniformity_loss(t64([[1, 0], [-1, 0]])).value) == 0.0
    assert float(uniformity_loss(t64([[0.6, 0.8]] * 7)).value) == pytest.approx(1.0, rel=1e-12)
    assert float(uniformity_loss(t64([[1, 0], [0, 1]])).value) == pytest.approx(0.5, rel=1e-12)


def test_collapse_orthonormal_basis_is_one_over_n():
    for n in (2, 3, 8, 32):
        assert collapse_metric(np.eye(n)) == pytest.approx(1.0 / n, rel=1e-12)


def test_collapse_matches_uniformity_and_rotation_invariant():
    rng = np.random.default_rng(7)
    z = rng.normal(size=(40, 6))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    c = collapse_metric(z)
    assert c == pytest.approx(float(uniformity_loss(t64(z)).value), rel=1e-10)
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    assert collapse_metric(z @ q) == pytest.approx(c, abs=1e-10)


def test_uniformity_jensen_strict_bound():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(10, 4))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    assert float(uniformity_loss(t64(z)).value) < 1.0


def test_entropy_proxy_values():
    assert entropy_proxy(1.0) == pytest.approx(-math.log(1 + 1e-6), rel=1e-12)
    assert entropy_proxy(1e-6) == pytest.approx(-math.log(2e-6), rel=1e-12)
    assert entropy_proxy(13.0) < entropy_proxy(0.5) < entropy_proxy(0.01)
    with pytest.raises(ValueError):
        entropy_proxy(-0.1)


def test_uniformity_gradient_pushes_apart():
    # all rows equal: drop the loss by perturbing one pre-normalization row
    base = np.tile([[3.0, 4.0]], (6, 1))

    def loss_of(h):
        z = h / np.linalg.norm(h, axis=1, keepdims=True)
        return collapse_metric(z)

    l0 = loss_of(base)
    pert = base.copy()
    pert[0] += np.array([0.01, -0.0075])  # orthogonal-ish nudge
    assert loss_of(pert) < l0


# ---------------------------------------------------------------------------
# invariances of the composed losses
# ---------------------------------------------------------------------------

def unit_rows(rng, n, d):
    z = rng.normal(size=(n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def test_losses_permutation_invariant():
    rng = np.random.default_rng(1)
    g = generate_sbm([8, 8], 0.5, 0.1, 0.1, seed=2)
    z = unit_rows(rng, g.num_nodes, 5)
    deg = np.diff(g.adjacency.indptr)
    a0 = float(alignment_loss(t64(z), neighbor_mean(t64(z), g.adjacency, 1),
                              deg, 5.0).value)
    u0 = float(uniformity_loss(t64(z)).value)

    perm = rng.permutation(g.num_nodes)
    gp = build_dataset(perm[g.edges], g.features[np.argsort(perm)])
    zp = z[np.argsort(perm)]
    degp = np.diff(gp.adjacency.indptr)
    a1 = float(alignment_loss(t64(zp), neighbor_mean(t64(zp), gp.adjacency, 1),
                              degp, 5.0).value)
    u1 = float(uniformity_loss(t64(zp)).value)
    assert a1 == pytest.approx(a0, abs=1e-10)
    assert u1 == pytest.approx(u0, abs=1e-10)


def test_losses_rotation_invariant():
    rng = np.random.default_rng(4)
    g = generate_sbm([10, 10], 0.4, 0.1, 0.1, seed=5)
    z = unit_rows(rng, g.num_nodes, 6)
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    deg = np.diff(g.adjacency.indptr)
    for orig, rot in [(z, z @ q)]:
        a0 = float(alignment_loss(t64(orig), neighbor_mean(t64(orig), g.adjacency, 2),
                                  deg, 5.0).value)
        a1 = float(alignment_loss(t64(rot), neighbor_mean(t64(rot), g.adjacency, 2),
                                  deg, 5.0).value)
        assert a1 == pytest.approx(a0, abs=1e-6)
    assert float(uniformity_loss(t64(z @ q)).value) == pytest.approx(
        float(uniformity_loss(t64(z)).value), abs=1e-6)


def test_constant_embeddings_idempotent_all_k():
    g = generate_sbm([6, 6], 0.5, 0.2, 0.1, seed=8)
    v = np.array([1.0, 0.0, 0.0])
    z = t64(np.tile(v, (g.num_nodes, 1)))
    deg = np.diff(g.adjacency.indptr)
    for k in (1, 2, 4):
        tgt = neighbor_mean(z, g.adjacency, k=k)
        live = tgt.valid
        assert np.allclose(tgt.mu.value[live], v, atol=1e-12)
        assert float(alignment_loss(z, tgt, deg, 5.0).value) == pytest.approx(0, abs=1e-12)


# ---------------------------------------------------------------------------
# total_loss composition
# ---------------------------------------------------------------------------

def fixture_view(seed=0):
    g = generate_sbm([10, 10], 0.4, 0.05, 0.2, seed=3)
    return augment(g, 0.2, 0.1, seed=seed)


def test_total_breakdown_identity():
    view = fixture_view()
    params = init_params(2, 4, seed=1)
    _, br, _ = total_loss(view, params, ObjectiveSettings(), alpha=0.7)
    assert br.total == pytest.approx(br.align + 0.7 * br.unif, abs=1e-6)
    assert 0.0 <= br.C <= 1.0 + 1e-6
    assert br.H_proxy == pytest.approx(-math.log(br.C + 1e-6), rel=1e-9)
    assert br.alpha_used == 0.7


def test_total_alpha_zero_is_pure_alignment():
    view = fixture_view()
    params = init_params(2, 4, seed=1)
    _, br, _ = total_loss(view, params, ObjectiveSettings(), alpha=0.0)
    assert br.total == pytest.approx(br.align, rel=1e-9)


def test_total_ablation_switches():
    view = fixture_view()
    params = init_params(2, 4, seed=1)
    _, full, _ = total_loss(view, params, ObjectiveSettings(), alpha=0.5)
    _, wo_unif, _ = total_loss(view, params,
                               ObjectiveSettings(use_unif=False), alpha=0.5)
    _, wo_align, _ = total_loss(view, params,
                                ObjectiveSettings(use_align=False), alpha=0.5)
    assert wo_unif.total == pytest.approx(full.align, rel=1e-9)
    assert wo_align.total == pytest.approx(0.5 * full.unif, rel=1e-9)
    with pytest.raises(ConfigError):
        total_loss(view, params,
                   ObjectiveSettings(use_align=False, use_unif=False), alpha=0.5)


def test_total_rejects_negative_alpha():
    with pytest.raises(ConfigError):
        total_loss(fixture_view(), init_params(2, 4), ObjectiveSettings(), alpha=-0.1)


def test_detach_target_changes_gradient_not_value():
    view = fixture_view()
    grads = {}
    for detach in (False, True):
        params = init_params(2, 4, seed=1)
        with dc.Tape() as tape:
            total, br, _ = total_loss(view, params,
                                      ObjectiveSettings(detach_target=detach),
                                      alpha=0.7)
            tape.backward(total)
        grads[detach] = (br.total, [w.grad.copy() for w in params.weights])
    assert grads[False][0] == pytest.approx(grads[True][0], rel=1e-7)
    assert any(not np.allclose(a, b, atol=1e-9)
               for a, b in zip(grads[False][1], grads[True][1]))


def test_settings_validation():
    with pytest.raises(ConfigError):
        ObjectiveSettings(k=0)
    with pytest.raises(ConfigError):
        ObjectiveSettings(tau=-1.0)
    with pytest.raises(ConfigError):
        ObjectiveSettings(mean_graph="both")


def test_mean_graph_view_uses_augmented_edges():
    g = generate_sbm([10, 10], 0.5, 0.1, 0.2, seed=6)
    view = augment(g, 0.7, 0.0, seed=4)
    params = init_params(2, 4, seed=2)
    _, br_orig, _ = total_loss(view, params,
                               ObjectiveSettings(mean_graph="original"), 0.5)
    _, br_view, _ = total_loss(view, params,
                               ObjectiveSettings(mean_graph="view"), 0.5)
    assert br_orig.align != pytest.approx(br_view.align, rel=1e-6)
