import numpy as np
import pytest

from galois.autodiff import Tape
from galois.engine import deduce, prob_sum
from galois.errors import DomainError, TapeError
from galois.logic import ValuationVector

from helpers import random_instance


def test_prob_sum_values():
    assert prob_sum(0.0, 0.0) == 0.0
    assert prob_sum(1.0, 0.3) == 1.0
    assert prob_sum(0.5, 0.5) == 0.75


def test_prob_sum_properties():
    rng = np.random.default_rng(0)
    for _ in range(200):
        x, y = rng.random(), rng.random()
        r = prob_sum(x, y)
        assert 0.0 <= r <= 1.0
        assert r == prob_sum(y, x)
        assert r >= max(x, y) - 1e-15


def test_prob_sum_domain_error():
    with pytest.raises(DomainError):
        prob_sum(-0.1, 0.5)
    with pytest.raises(DomainError):
        prob_sum(0.2, 1.5)


def test_softmax_backward_matches_analytic_jacobian():
    rng = np.random.default_rng(1)
    for _ in range(20):
        theta = rng.normal(0, 2, 6)
        r = rng.normal(0, 1, 6)
        tape = Tape()
        t = tape.leaf(theta)
        w = tape.softmax(t)
        out = tape.dot(w, tape.leaf(r))
        grads = tape.backward({out: 1.0})
        wv = tape.value(w)
        jac = np.diag(wv) - np.outer(wv, wv)
        np.testing.assert_allclose(grads[t], jac.T @ r, rtol=1e-12, atol=1e-14)


def test_prob_sum_node_partials():
    tape = Tape()
    a = tape.leaf(0.3)
    b = tape.leaf(0.8)
    out = tape.prob_sum(a, b)
    grads = tape.backward({out: 1.0})
    assert grads[a] == pytest.approx(1.0 - 0.8)
    assert grads[b] == pytest.approx(1.0 - 0.3)


def test_backward_unseeded():
    tape = Tape()
    a = tape.leaf(1.0)
    with pytest.raises(TapeError):
        tape.backward({})
    with pytest.raises(TapeError):
        tape.backward({a + 99: 1.0})


def _fd_check(build, x0, rtol=1e-5, h=1e-4):
    """Central finite differences on f: R^n -> R against the tape gradient."""
    tape = Tape()
    leaf, out = build(tape, x0)
    grads = tape.backward({out: 1.0})
    g = np.atleast_1d(grads[leaf])
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    fd = np.zeros_like(x0)
    for i in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h
        xm[i] -= h
        tp, tm = Tape(), Tape()
        _, op = build(tp, xp)
        _, om = build(tm, xm)
        fd[i] = (float(tp.value(op)) - float(tm.value(om))) / (2 * h)
    scale = np.maximum(np.abs(fd), 1e-6)
    assert np.max(np.abs(g - fd) / scale) < rtol


def test_entropy_and_normalize_gradients_fd():
    rng = np.random.default_rng(3)

    def build(tape, x):
        leaf = tape.leaf(x)
        s = tape.total(leaf)
        pi = tape.div(leaf, s)
        h = tape.entropy(pi)
        lp = tape.log(tape.gather(pi, [1]))
        return leaf, tape.add(h, tape.total(lp))

    for _ in range(10):
        x = rng.random(5) + 0.05
        _fd_check(build, x)


def test_gather_assemble_roundtrip_gradients():
    def build(tape, x):
        leaf = tape.leaf(x)
        picked = tape.gather(leaf, [2, 0, 2])
        vec = tape.assemble([picked, tape.leaf(1.0)], [np.array([0, 1, 2]), 3], 4)
        return leaf, tape.dot(vec, tape.leaf(np.array([1.0, 2.0, 3.0, 4.0])))

    _fd_check(build, np.array([0.3, 0.9, 0.4]))


def test_random_deduction_finite_differences():
    # Random multi-step deductions, gradient of a random linear readout of the
    # final valuation w.r.t. every clause-weight vector.
    rng = np.random.default_rng(42)
    for _ in range(25):
        base, library, params, hole, e0 = random_instance(rng)
        tau = int(rng.integers(1, 4))
        readout = rng.random(len(base))

        def value_of(store):
            res = deduce(
                ValuationVector(base, e0), library, store, hole, tau_max=tau
            )
            return float(np.dot(readout, res.final.values))

        tape = Tape()
        res = deduce(
            ValuationVector(base, e0), library, params, hole, tau_max=tau, tape=tape
        )
        out = tape.dot(res.final_slot, tape.leaf(readout))
        grads = tape.backward({out: 1.0})

        h = 1e-4
        for key, slot in res.theta_slots.items():
            th = params.theta[key]
            for i in range(th.size):
                store_p = params.copy()
                store_m = params.copy()
                store_p.theta[key][i] += h
                store_m.theta[key][i] -= h
                fd = (value_of(store_p) - value_of(store_m)) / (2 * h)
                got = grads[slot][i]
                assert abs(got - fd) / max(abs(fd), 1e-6) < 1e-5
