import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from visprefix import diffmath as dm
from visprefix.errors import ConfigError, UsageError
from visprefix.gating import (GateParams, aggregate, build_prefix_bank, gate_logits, gate_probs,
                              one_to_three_block)


def bundle(rng, c=4, m=2, d=6, h=2, w=2):
    """c block tensors [m+1, d, h, w]."""
    return [dm.Tensor(rng.normal(size=(m + 1, d, h, w))) for _ in range(c)]


def naive_flatten(v):
    # [d, h, w] -> [h*w, d], row-major over (h, w)
    d, h, w = v.shape
    return np.array([[v[k, i, j] for k in range(d)] for i in range(h) for j in range(w)])


def test_zero_map_zero_logits(f64):
    p = GateParams(6, 4, 2, np.random.default_rng(0))
    p.w[0].data[...] = 0
    assert not gate_logits(bundle(np.random.default_rng(1)), 1, p).data.any()


def test_hand_matrix_logits(f64):
    d, c, v = 6, 4, 0.7
    p = GateParams(d, c, 1, np.random.default_rng(0))
    sel = np.zeros((d, c))
    sel[np.arange(c), np.arange(c)] = 1.0
    sel[5, 1] = -3.0  # column sums [1, -2, 1, 1]
    p.w[0].data[...] = sel
    feats = [dm.Tensor(np.full((d, 2, 2), v)) for _ in range(c)]
    expected = [v, -2 * v * 0.01, v, v]
    assert np.allclose(gate_logits(feats, 1, p).data, expected, atol=1e-15)


def test_layers_have_independent_maps(f64):
    p = GateParams(6, 4, 2, np.random.default_rng(0))
    f = bundle(np.random.default_rng(2))
    assert not np.allclose(gate_logits(f, 1, p).data, gate_logits(f, 2, p).data)


def test_layer_out_of_range(f64):
    p = GateParams(6, 4, 2, np.random.default_rng(0))
    with pytest.raises(UsageError):
        gate_logits(bundle(np.random.default_rng(1)), 3, p)
    with pytest.raises(UsageError):
        build_prefix_bank(bundle(np.random.default_rng(1)), 0, p, "hierarchical")


def test_gate_probs_examples(f64):
    assert np.allclose(gate_probs(dm.Tensor(np.zeros(4))).data, 0.25)
    got = gate_probs(dm.Tensor([0.0, math.log(3), 0.0, 0.0])).data
    assert np.allclose(got, [1 / 6, 1 / 2, 1 / 6, 1 / 6], atol=1e-15)


@given(st.integers(0, 2**31))
def test_gate_probs_sound(seed):
    with dm.precision(64):
        rng = np.random.default_rng(seed)
        p = GateParams(6, 4, 3, rng)
        for name, q in p.named_params().items():
            q.data[...] = rng.normal(0, 1.0, q.shape)
        f = bundle(rng)
        for layer in (1, 2, 3):
            logits = gate_logits(f, layer, p).data
            probs = gate_probs(dm.Tensor(logits)).data
            assert np.all((probs > 0) & (probs < 1))
            assert np.all(np.abs(probs.sum(-1) - 1) <= 1e-9)
            assert np.array_equal(np.argmax(probs, -1), np.argmax(logits, -1))


def test_aggregate_selection_and_mean(f64):
    f = [dm.Tensor(t.data[0]) for t in bundle(np.random.default_rng(3))]
    for i in range(4):
        out = aggregate(f, dm.Tensor(np.eye(4)[i])).data
        assert np.array_equal(out, naive_flatten(f[i].data))
    mean = aggregate(f, dm.Tensor(np.full(4, 0.25))).data
    assert np.allclose(mean, sum(naive_flatten(v.data) for v in f) / 4, atol=1e-15)


@given(st.integers(0, 2**31))
def test_aggregate_naive_oracle_and_linearity(seed):
    with dm.precision(64):
        rng = np.random.default_rng(seed)
        f = [dm.Tensor(t.data[0]) for t in bundle(rng, h=3, w=2)]
        p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
        ref = np.zeros((6, 6))
        for i in range(4):
            ref += p[i] * naive_flatten(f[i].data)
        assert np.max(np.abs(aggregate(f, dm.Tensor(p)).data - ref)) <= 1e-12
        a = rng.uniform()
        lhs = aggregate(f, dm.Tensor(a * p + (1 - a) * q)).data
        rhs = a * aggregate(f, dm.Tensor(p)).data + (1 - a) * aggregate(f, dm.Tensor(q)).data
        assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_bank_lengths(f64):
    rng = np.random.default_rng(4)
    p = GateParams(6, 4, 4, rng)
    f = bundle(rng, m=2, h=2, w=2)
    for mode in ("hierarchical", "flat", "one_to_three"):
        assert build_prefix_bank(f, 1, p, mode).shape == (12, 6)
    assert build_prefix_bank(f, 1, p, "only_obj").shape == (8, 6)


def test_bank_order_global_first(f64):
    rng = np.random.default_rng(5)
    p = GateParams(6, 4, 4, rng)
    f = bundle(rng, m=2, h=2, w=1)
    bank, probs = build_prefix_bank(f, 2, p, "hierarchical", return_probs=True)
    for inp in range(3):
        per = [dm.Tensor(v.data[inp]) for v in f]
        seg = aggregate(per, dm.Tensor(probs.data[inp])).data
        assert np.allclose(bank.data[2 * inp:2 * inp + 2], seg, atol=1e-15)


def test_only_obj_drops_global_but_keeps_gate(f64):
    rng = np.random.default_rng(6)
    p = GateParams(6, 4, 2, rng)
    f = bundle(rng, m=2)
    full = build_prefix_bank(f, 1, p, "hierarchical").data
    objs, probs = build_prefix_bank(f, 1, p, "only_obj", return_probs=True)
    assert probs is not None and probs.shape == (2, 4)
    # the gate input average differs once the global image is dropped, so compare by recomputation
    per = [[dm.Tensor(v.data[i]) for v in f] for i in (1, 2)]
    ref = np.concatenate([aggregate(x, dm.Tensor(pr)).data for x, pr in zip(per, probs.data)])
    assert np.allclose(objs.data, ref, atol=1e-15)
    assert full.shape[0] - objs.shape[0] == 4


def test_only_obj_without_objects(f64):
    rng = np.random.default_rng(7)
    with pytest.raises(ConfigError):
        build_prefix_bank(bundle(rng, m=0), 1, GateParams(6, 4, 2, rng), "only_obj")


def test_flat_equals_forced_one_hot_on_last_block(f64):
    rng = np.random.default_rng(8)
    p = GateParams(6, 4, 2, rng)
    f = bundle(rng)
    flat = build_prefix_bank(f, 1, p, "flat").data
    forced = np.concatenate([aggregate([dm.Tensor(v.data[i]) for v in f], dm.Tensor(np.eye(4)[3])).data
                             for i in range(3)])
    assert np.array_equal(flat, forced)


def test_hierarchical_equals_flat_with_one_block(f64):
    rng = np.random.default_rng(9)
    p = GateParams(6, 1, 2, rng)
    f = bundle(rng, c=1)
    for layer in (1, 2):
        assert np.array_equal(build_prefix_bank(f, layer, p, "hierarchical").data,
                              build_prefix_bank(f, layer, p, "flat").data)


def test_one_to_three_routing_enumeration():
    assert [one_to_three_block(l, 12, 4) for l in range(1, 13)] == [1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4]
    assert [one_to_three_block(l, 4, 4) for l in range(1, 5)] == [1, 2, 3, 4]
    with pytest.raises(ConfigError):
        one_to_three_block(1, 10, 4)


def test_one_to_three_bank_uses_routed_block(f64):
    rng = np.random.default_rng(10)
    p = GateParams(6, 4, 8, rng)
    f = bundle(rng)
    for layer in range(1, 9):
        blk = (layer - 1) // 2
        ref = np.concatenate([naive_flatten(f[blk].data[i]) for i in range(3)])
        assert np.array_equal(build_prefix_bank(f, layer, p, "one_to_three").data, ref)


def test_gate_gradients_reach_layer_map():
    with dm.precision(64):
        rng = np.random.default_rng(11)
        p = GateParams(6, 4, 2, rng)
        for q in p.named_params().values():
            q.data[...] = rng.normal(0, 1.0, q.shape)
        f = bundle(rng)
        w = rng.normal(size=(12, 6))
        err = dm.finite_diff_check(
            lambda: (build_prefix_bank(f, 2, p, "hierarchical") * dm.Tensor(w)).sum(),
            {"w2": p.w[1], "b2": p.b[1]}, per_group=24)
        assert err <= 1e-6
