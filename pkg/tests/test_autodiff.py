"""Finite-difference checks for every differentiable op."""

import numpy as np
import pytest

from kgalign import autodiff as ad

from oracles import finite_difference


def check_op(build, shapes, rng, h=1e-6, tol=1e-6):
    """Compare analytic gradients of sum(op(...)) against central differences."""
    values = [rng.standard_normal(s) for s in shapes]
    leaves = [ad.leaf(v.copy()) for v in values]
    out = build(*leaves)
    total = out if np.isscalar(out.value) else ad.reduce_sum(out)
    grads = ad.backward(total)
    for i, v in enumerate(values):
        def f(x, i=i):
            vs = [u.copy() for u in values]
            vs[i] = x.reshape(values[i].shape)
            ls = [ad.leaf(u) for u in vs]
            o = build(*ls)
            return float(np.sum(o.value))

        fd = finite_difference(f, v.copy().ravel(), h).reshape(v.shape)
        an = grads.get(id(leaves[i]))
        assert an is not None, f"no gradient for input {i}"
        np.testing.assert_allclose(an, fd, rtol=tol, atol=tol)


def test_matmul(rng):
    check_op(ad.matmul, [(4, 3), (3, 5)], rng)


def test_project_images(rng):
    check_op(ad.project_images, [(3, 4, 2), (2, 5)], rng)


def test_add_bias_2d(rng):
    check_op(ad.add_bias, [(4, 3), (3,)], rng)


def test_add_bias_3d(rng):
    check_op(ad.add_bias, [(2, 3, 4), (4,)], rng)


def test_sub_and_add_scalar(rng):
    check_op(lambda a, b: ad.add_scalar(ad.sub(a, b), 0.3), [(5,), (5,)], rng)


def test_relu_away_from_kink(rng):
    # keep inputs away from 0 so the finite difference is valid
    values = rng.standard_normal((4, 4))
    values[np.abs(values) < 0.05] = 0.2
    leaf = ad.leaf(values)
    grads = ad.backward(ad.reduce_sum(ad.relu(leaf)))
    np.testing.assert_allclose(grads[id(leaf)], (values > 0).astype(float))


def test_relu_zero_subgradient():
    leaf = ad.leaf(np.array([[0.0, 1.0, -1.0]]))
    grads = ad.backward(ad.reduce_sum(ad.relu(leaf)))
    np.testing.assert_array_equal(grads[id(leaf)], [[0.0, 1.0, 0.0]])


def test_row_normalize(rng):
    check_op(ad.row_normalize, [(4, 3)], rng)


def test_row_normalize_zero_row_guard():
    x = np.array([[0.0, 0.0], [3.0, 4.0]])
    leaf = ad.leaf(x)
    node = ad.row_normalize(leaf)
    np.testing.assert_allclose(node.value, [[0.0, 0.0], [0.6, 0.8]])
    grads = ad.backward(ad.reduce_sum(node))
    assert np.all(grads[id(leaf)][0] == 0.0)


def test_mask_rows(rng):
    mask = np.array([1.0, 0.0, 1.0])
    check_op(lambda x: ad.mask_rows(x, mask), [(3, 4)], rng)


def test_softmax_vec(rng):
    check_op(ad.softmax_vec, [(6,)], rng)


def test_weighted_concat(rng):
    def build(a, b, w):
        return ad.weighted_concat([a, b], ad.softmax_vec(w))

    check_op(build, [(3, 2), (3, 2), (2,)], rng)


def test_attention_pool(rng):
    mask = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]])

    def build(g, u):
        return ad.attention_pool(g, u, mask)

    check_op(build, [(3, 4), (3, 3, 4)], rng)


def test_gather_and_rowdot(rng):
    idx = np.array([0, 2, 2, 1])

    def build(x, y):
        return ad.rowdot(ad.gather_rows(x, idx), ad.gather_rows(y, idx))

    check_op(build, [(3, 4), (3, 4)], rng)


def test_gather_vec(rng):
    idx = np.array([1, 1, 0])
    check_op(lambda x: ad.gather_vec(x, idx), [(4,)], rng)


def test_gradient_accumulates_across_consumers(rng):
    # diamond: y = sum(x@w) + sum(rownorm(x@w)) reuses the same node
    x = ad.leaf(rng.standard_normal((3, 3)))
    w = ad.leaf(rng.standard_normal((3, 2)))
    prod = ad.matmul(x, w)
    total = ad.reduce_sum(ad.add(prod, ad.row_normalize(prod)))
    grads = ad.backward(total)

    def f(wv):
        p = x.value @ wv.reshape(3, 2)
        norms = np.linalg.norm(p, axis=1, keepdims=True)
        safe = np.where(norms > 0, norms, 1.0)
        return float(np.sum(p + p / safe))

    fd = finite_difference(f, w.value.copy().ravel()).reshape(3, 2)
    np.testing.assert_allclose(grads[id(w)], fd, rtol=1e-6, atol=1e-6)
