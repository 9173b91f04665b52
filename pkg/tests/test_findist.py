import random
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from gradedcoalg import findist
from gradedcoalg.findist import (
    FinDist,
    FinSubDist,
    bind,
    dirac,
    dist_eq,
    flatten,
    power,
    product,
    pushforward,
    strength,
    to_ket,
    uniform,
)


def test_dirac_and_units():
    f = {"a": FinDist({"c": F(1)}), "b": FinDist({"c": F(1, 2), "d": F(1, 2)})}
    assert dict(dirac("a").items()) == {"a": 1}
    assert bind(dirac("a"), f.__getitem__) == f["a"]
    half = FinDist({"a": F(1, 2), "b": F(1, 2)})
    assert bind(half, dirac) == half
    assert pushforward(dirac("a"), str.upper) == dirac("A")


def test_bind_hand_convolution():
    # three paths: a->c (1/2), b->c (1/4), b->d (1/4)
    d = FinDist({"a": F(1, 2), "b": F(1, 2)})
    out = bind(d, {"a": FinDist({"c": 1}), "b": FinDist({"c": F(1, 2), "d": F(1, 2)})}.__getitem__)
    assert out == FinDist({"c": F(3, 4), "d": F(1, 4)})


def test_strength_product_marginal():
    d = FinDist({"x": F(1, 3), "y": F(2, 3)})
    assert strength("b", dirac("x")) == dirac(("b", "x"))
    assert strength("b", d) == FinDist({("b", "x"): F(1, 3), ("b", "y"): F(2, 3)})
    assert pushforward(strength("b", d), lambda a: a[1]) == d
    coin = FinDist({"y": F(1, 2), "n": F(1, 2)})
    pairs = product(coin, coin)
    assert len(pairs) == 4 and all(w == F(1, 4) for _, w in pairs.items())
    assert pushforward(FinDist({("y", "s"): F(1, 4), ("n", "s"): F(3, 4)}), lambda a: a[0]) == \
        FinDist({"y": F(1, 4), "n": F(3, 4)})


def test_power_counts_words():
    coin = FinDist({"y": F(1, 2), "n": F(1, 2)})
    p3 = power(coin, 3)
    assert len(p3) == 8 and p3.mass == 1
    assert power(coin, 0) == dirac(())


def test_dist_eq_tolerances():
    d = FinDist({"a": F(1)})
    assert dist_eq(d, d, 0)
    assert dist_eq(d, FinSubDist({"a": 1 - 1e-12}), 1e-9)
    assert not dist_eq(d, FinDist({"b": F(1)}), 1e-9)


def test_validation():
    with pytest.raises(ValueError):
        FinDist({"a": F(1, 2)})
    with pytest.raises(ValueError):
        FinSubDist({"a": F(-1, 4)})
    with pytest.raises(ValueError):
        FinSubDist({"a": F(3, 4), "b": F(1, 2)})
    sub = FinSubDist({"a": F(1, 4)})
    assert sub.mass == F(1, 4) and not sub.is_full()


def test_float_mode_mixes_cleanly():
    d = FinDist({"a": 0.25, "b": 0.75})
    out = bind(d, lambda x: FinDist({x + "!": F(1)}))
    assert not out.exact and abs(out["b!"] - 0.75) < 1e-15


def test_ket_rendering():
    assert to_ket(uniform(["p", "q"])) == "1/2|p⟩ + 1/2|q⟩"


def test_monad_laws_full_enumeration():
    assert findist.check_monad_laws().passed


def test_distributive_law_small():
    rep = findist.check_distributive_law(("x", "y"), ("a", "b"))
    assert rep.passed and set(rep.checked) == {"monad-unit", "writer-unit", "monad-mult", "writer-mult"}


def test_multiplication_diagram_on_random_nested():
    rng = random.Random(11)
    dists = findist.grid_distributions(("x", "y", "z"), (F(0), F(1, 4), F(1, 2), F(3, 4), F(1)))
    law = findist.writer_strength_law
    for _ in range(50):
        dd = dirac(rng.choice(dists)) if rng.random() < 0.2 else \
            findist.uniform(rng.sample(dists, 2))
        w = tuple(rng.choice("ab") for _ in range(rng.randint(0, 2)))
        assert law(w, flatten(dd)) == flatten(pushforward(law(w, dd), lambda p: law(p[0], p[1])))


def test_swap_label_mutation_reports_counterexample():
    rep = findist.check_distributive_law(("x",), ("a", "b"), law=findist.swap_label_law("a", "b"), stop_at_first=True)
    assert not rep.passed
    diagram, args, lhs, rhs = rep.first_failure
    assert diagram == "monad-unit" and lhs != rhs
    assert "FAIL" in rep.summary()


weights = st.lists(st.integers(1, 6), min_size=1, max_size=4)


def _dist(ws, names="abcd"):
    total = sum(ws)
    return FinDist({names[i]: F(w, total) for i, w in enumerate(ws)})


@given(weights, weights, weights)
def test_associativity_property(w0, w1, w2):
    d, f_d, g_d = _dist(w0), _dist(w1, "pqrs"), _dist(w2, "wxyz")
    f = lambda x: pushforward(f_d, lambda y: x + y)  # noqa: E731
    g = lambda x: pushforward(g_d, lambda y: x[0] + y)  # noqa: E731
    assert bind(bind(d, f), g) == bind(d, lambda x: bind(f(x), g))


@given(weights, weights)
def test_nested_bind_equals_flatten_of_map(w0, w1):
    d, e = _dist(w0), _dist(w1, "pqrs")
    k = lambda x: pushforward(e, lambda y: (x, y))  # noqa: E731
    assert bind(d, k) == flatten(pushforward(d, k))
