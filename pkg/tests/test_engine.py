import numpy as np
import pytest

from galois.autodiff import Tape
from galois.engine import (
    ParamStore,
    deduce,
    policy_update,
    soft_step,
)
from galois.errors import NumericsError, ShapeError
from galois.logic import (
    INTENSIONAL,
    Clause,
    ClauseLibrary,
    HerbrandBase,
    Literal,
    ValuationVector,
    boolean_forward_chain,
)

from helpers import nullary, random_instance


def _single_clause_setup():
    p = nullary("p")
    h = nullary("h", INTENSIONAL)
    base = HerbrandBase(sorted([p, h]))
    lib = ClauseLibrary(({h: (Clause(h, (Literal(p),)),)},))
    params = ParamStore()
    params.theta[("x", "h")] = np.array([3.7])  # any value: softmax of one is 1
    params.reset_optimizer()
    e0 = ValuationVector.from_facts(base, {p})
    return base, lib, params, e0, p, h


def test_soft_step_single_clause_fires():
    base, lib, params, e0, p, h = _single_clause_setup()
    e1 = soft_step(e0, lib, params, "x")
    assert e1.value(h) == pytest.approx(1.0)
    assert e1.value(p) == 1.0  # extensional untouched


def test_soft_step_uniform_two_candidates_halves():
    p, q = nullary("p"), nullary("q")
    h = nullary("h", INTENSIONAL)
    base = HerbrandBase(sorted([p, q, h]))
    lib = ClauseLibrary(
        ({h: (Clause(h, (Literal(p),)), Clause(h, (Literal(q),)))},)
    )
    params = ParamStore()
    params.theta[("x", "h")] = np.zeros(2)
    params.reset_optimizer()
    e0 = ValuationVector.from_facts(base, {p})  # bodies evaluate to 1 and 0
    e1 = soft_step(e0, lib, params, "x")
    assert e1.value(h) == pytest.approx(0.5)


def test_one_hot_weights_reproduce_boolean_chaining():
    rng = np.random.default_rng(5)
    for _ in range(20):
        base, library, params, hole, _ = random_instance(rng)
        facts = {a for a in base.extensional_atoms() if rng.random() < 0.5}
        # force an exact one-hot on a random candidate of every head
        chosen = {}
        for (h, head_name), th in params.theta.items():
            idx = int(rng.integers(0, th.size))
            params.set_one_hot(hole, head_name, idx)
            chosen[head_name] = idx
        selected = []
        for layer in library.layers:
            for head, cands in layer.items():
                selected.append(cands[chosen[str(head)]])
        tau = len(library.heads()) + 1
        res = deduce(
            ValuationVector.from_facts(base, facts), library, params, hole, tau_max=tau
        )
        derived = boolean_forward_chain(selected, facts, steps=tau)
        expected = np.array([1.0 if a in derived else 0.0 for a in base.atoms])
        np.testing.assert_array_equal(res.final.values, expected)


def test_deduce_tau1_equals_soft_step():
    rng = np.random.default_rng(6)
    base, library, params, hole, e0 = random_instance(rng)
    v = ValuationVector(base, e0)
    np.testing.assert_allclose(
        deduce(v, library, params, hole, tau_max=1).final.values,
        soft_step(v, library, params, hole).values,
    )


def test_deduce_monotone_per_step():
    rng = np.random.default_rng(7)
    for _ in range(30):
        base, library, params, hole, e0 = random_instance(rng)
        res = deduce(ValuationVector(base, e0), library, params, hole, tau_max=4)
        for a, b in zip(res.steps, res.steps[1:]):
            assert np.all(b.values >= a.values - 1e-12)
            assert np.all(b.values <= 1.0 + 1e-12)


def test_two_layer_chain_needs_two_steps():
    p = nullary("p")
    h1 = nullary("h1", INTENSIONAL)
    h2 = nullary("h2", INTENSIONAL)
    base = HerbrandBase(sorted([p, h1, h2]))
    lib = ClauseLibrary(
        (
            {h1: (Clause(h1, (Literal(p),)),)},
            {h2: (Clause(h2, (Literal(h1),)),)},
        )
    )
    params = ParamStore()
    params.theta[("x", "h1")] = np.zeros(1)
    params.theta[("x", "h2")] = np.zeros(1)
    params.reset_optimizer()
    e0 = ValuationVector.from_facts(base, {p})
    one = deduce(e0, lib, params, "x", tau_max=1)
    two = deduce(e0, lib, params, "x", tau_max=2)
    assert one.final.value(h2) == pytest.approx(0.0)
    assert two.final.value(h2) == pytest.approx(1.0)


def test_taped_and_plain_paths_agree():
    rng = np.random.default_rng(8)
    for _ in range(20):
        base, library, params, hole, e0 = random_instance(rng)
        v = ValuationVector(base, e0)
        plain = deduce(v, library, params, hole, tau_max=3)
        taped = deduce(v, library, params, hole, tau_max=3, tape=Tape())
        np.testing.assert_allclose(
            plain.final.values, taped.final.values, rtol=0, atol=1e-12
        )


def test_softmax_shift_invariance():
    rng = np.random.default_rng(9)
    base, library, params, hole, e0 = random_instance(rng)
    v = ValuationVector(base, e0)
    before = deduce(v, library, params, hole, tau_max=3).final.values
    for key in params.theta:
        params.theta[key] += 17.3
    after = deduce(v, library, params, hole, tau_max=3).final.values
    np.testing.assert_allclose(before, after, rtol=0, atol=1e-12)


def test_shape_mismatch_raises():
    rng = np.random.default_rng(10)
    base, library, params, hole, e0 = random_instance(rng)
    key = next(iter(params.theta))
    params.theta[key] = np.zeros(params.theta[key].size + 1)
    with pytest.raises(ShapeError):
        soft_step(ValuationVector(base, e0), library, params, hole)


def test_adam_step_matches_hand_computation():
    params = ParamStore()
    params.theta[("x", "h")] = np.array([1.0, -2.0])
    params.reset_optimizer()
    g = np.array([0.5, -1.0])
    alpha, b1, b2, eps = 0.001, 0.9, 0.999, 1e-8

    m = (1 - b1) * g
    v = (1 - b2) * g * g
    m_hat = m / (1 - b1)
    v_hat = v / (1 - b2)
    expected = np.array([1.0, -2.0]) + alpha * m_hat / (np.sqrt(v_hat) + eps)

    policy_update(params, {("x", "h"): g}, alpha=alpha)
    np.testing.assert_allclose(params.theta[("x", "h")], expected, rtol=1e-15)
    assert params.step_count == 1


def test_adam_zero_gradient_leaves_theta():
    params = ParamStore()
    params.theta[("x", "h")] = np.array([0.3, 0.7])
    params.reset_optimizer()
    policy_update(params, {("x", "h"): np.zeros(2)})
    np.testing.assert_array_equal(params.theta[("x", "h")], [0.3, 0.7])
    assert params.step_count == 1


def test_nan_gradient_raises_numerics_error():
    params = ParamStore()
    params.theta[("x", "h")] = np.array([0.3, 0.7])
    params.reset_optimizer()
    with pytest.raises(NumericsError):
        policy_update(params, {("x", "h"): np.array([np.nan, 0.0])})
    # state untouched on failure
    assert params.step_count == 0
    np.testing.assert_array_equal(params.theta[("x", "h")], [0.3, 0.7])


def test_valuation_bounds_random_deduces():
    rng = np.random.default_rng(11)
    for _ in range(100):
        base, library, params, hole, e0 = random_instance(rng)
        res = deduce(ValuationVector(base, e0), library, params, hole, tau_max=4)
        assert np.all(res.final.values >= 0.0)
        assert np.all(res.final.values <= 1.0)
