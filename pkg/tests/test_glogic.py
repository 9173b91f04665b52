from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gradedcoalg import ctmc, glogic
from gradedcoalg.findist import FinDist, FinSubDist
from gradedcoalg.gcoalg import trace_vector
from gradedcoalg.glogic import (
    BOOLEAN,
    QUANTITATIVE,
    TOP,
    And,
    Delay,
    FormulaSyntaxError,
    Label,
    Mix,
    Not,
    format_formula,
    parse_formula,
)
from gradedcoalg.timealg import SamplingWord, parse_word

HALF = Fraction(1, 2)


@pytest.fixture(scope="module")
def m4():
    return ctmc.repairable_4state(1, 1)


@pytest.fixture(scope="module")
def m3():
    return ctmc.repairable_3state(1, 1)


class TestParsing:
    def test_constants_and_modalities(self):
        assert parse_formula("T") == TOP
        assert parse_formula("(yes)_0.5 T") == Label("yes", TOP, HALF)
        assert parse_formula("<1.5> (yes) T") == Delay(Fraction(3, 2), Label("yes", TOP))

    def test_precedence(self):
        f = parse_formula("!(yes)_1/4 T & <2>_0.5 T")
        assert f == And(Not(Label("yes", TOP, Fraction(1, 4))), Delay(2, TOP, HALF))
        g = parse_formula("(yes) T +_0.25 (no) T")
        assert g == Mix(Fraction(1, 4), Label("yes", TOP), Label("no", TOP))

    @pytest.mark.parametrize(
        "text, offset",
        [
            ("(yes)_0.5 T +_0.5 T", 12),
            ("(yes)_1.5 T", 6),
            ("<1> ", 4),
            ("T T", 2),
            ("(yes) T & T", 8),
            ("T $", 2),
        ],
    )
    def test_errors_carry_offsets(self, text, offset):
        with pytest.raises(FormulaSyntaxError) as info:
            parse_formula(text)
        assert info.value.offset == offset

    def test_unknown_label(self):
        with pytest.raises(FormulaSyntaxError, match="unknown label 'maybe'"):
            parse_formula("(maybe) T", labels=("yes", "no"))


def test_boolean_evaluation(m4):
    vals = glogic.evaluate("(yes)_0.5 T", m4, BOOLEAN)
    assert vals == {"0": False, "L": True, "R": True, "2": True}
    assert glogic.eval_boolean("!((yes)_0.75 T)", m4, "L") is True
    assert all(glogic.evaluate("T", m4, BOOLEAN).values())


def test_quantitative_evaluation(m4):
    assert glogic.eval_quantitative("T", m4, "0") == 1
    assert glogic.eval_quantitative("(yes) T", m4, "L") == HALF
    v = glogic.eval_quantitative("<1>(yes)T", m4, "2")
    assert float(v) == pytest.approx(0.56766764161830635, abs=1e-10)


def test_instance_rejects_other_flavour(m4):
    with pytest.raises(ValueError):
        glogic.evaluate("(yes) T", m4, BOOLEAN)


def test_uniform_depth():
    assert glogic.uniform_depth(TOP) == SamplingWord.unit()
    assert glogic.uniform_depth(parse_formula("<1> (yes) T")) == parse_word("1:1")
    assert isinstance(glogic.uniform_depth(parse_formula("(yes)T +_0.5 <1>T")), glogic.NotUniform)
    assert glogic.uniform_depth(parse_formula("(yes) <1> T +_0.5 (no) <1> T")) == parse_word("0:1, 1:0")


def test_trace_semantics_examples():
    assert glogic.trace_semantics(TOP)(FinDist({(): Fraction(1)})) == 1
    with pytest.raises(ValueError):
        glogic.trace_semantics(TOP)(FinDist({("yes",): Fraction(1)}))
    sem = glogic.trace_semantics(parse_formula("(yes) T"))
    assert sem(FinDist({("yes",): HALF, ("no",): HALF})) == HALF


def test_trace_semantics_matches_evaluation(m4, m3):
    for text in ["(yes) (no) T", "<1/2> (yes) T +_0.25 <1/2> (no) T", "(no) <2> (yes) T"]:
        f = parse_formula(text)
        k = glogic.uniform_depth(f)
        sem = glogic.trace_semantics(f)
        for m in (m4, m3):
            vals = glogic.evaluate(f, m, QUANTITATIVE)
            for x in m.states:
                assert float(vals[x]) == pytest.approx(float(sem(trace_vector(m, x, k))), abs=1e-9)


def test_trace_logic_axioms():
    q = glogic.trace_logic_axiom_check(QUANTITATIVE)
    assert q.passed
    b = glogic.trace_logic_axiom_check(BOOLEAN)
    assert not b.passed
    assert any("and" in name for name in b.failed_checks())
    assert not any("not" in name for name in b.failed_checks())
    assert b.counts.get("algebra-unit", 0) > 0


def test_uniformity_identities():
    assert glogic.g_uniformity_check().passed


def test_logical_quotient(m4):
    assert glogic.logical_quotient(m4, BOOLEAN) == (("0",), ("L", "R"), ("2",))
    assert glogic.logical_quotient(m4, BOOLEAN, glogic.FormulaBudget(max_depth=0)) == (("0", "L", "R", "2"),)
    data = ctmc.model_to_json(ctmc.repairable_3state(1, 1))
    data["obs"]["1"] = {"yes": "1/4", "no": "3/4"}
    distinct = ctmc.model_from_json(data)
    assert glogic.logical_quotient(distinct, BOOLEAN, glogic.FormulaBudget(max_depth=1)) == (("0",), ("1",), ("2",))


def test_distinguishing_formula(m4, m3):
    f = glogic.find_distinguishing_formula(m4, "0", m4, "2")
    vals = glogic.evaluate(f, m4, BOOLEAN)
    assert vals["0"] is False and vals["2"] is True and glogic.modal_depth(f) == 1
    assert glogic.find_distinguishing_formula(m4, "L", m4, "R") is None
    assert glogic.find_distinguishing_formula(m4, "L", m4, "L") is None
    assert glogic.find_distinguishing_formula(m4, "L", m3, "1") is None


def test_invariance_reports_disagreement(m4):
    rep = glogic.invariance_suite(m4, BOOLEAN, [("0", "2")], budget=glogic.FormulaBudget(max_depth=1))
    assert not rep.agree and rep.disagreements[0][0] == ("0", "2")


class TestProbe:
    def test_delay_grade_example(self):
        mu = FinDist({"a": Fraction(3, 5), "b": Fraction(2, 5)})
        nu = FinDist({"a": HALF, "b": HALF})
        w = glogic.separating_modality_probe(mu, nu, parse_word("1:0"))
        assert (w.kind, w.target, w.threshold, w.left, w.right) == ("delay", "a", Fraction(3, 5), True, False)

    def test_equal(self):
        mu = FinDist({"a": HALF, "b": HALF})
        assert glogic.separating_modality_probe(mu, mu, parse_word("1:0")) is glogic.EQUAL

    def test_label_grade(self):
        mu = FinDist({("yes", "x"): Fraction(3, 4), ("no", "x"): Fraction(1, 4)})
        nu = FinDist({("yes", "x"): Fraction(1, 4), ("no", "x"): Fraction(3, 4)})
        w = glogic.separating_modality_probe(mu, nu, glogic.LABEL_STEP)
        assert w.kind == "label" and w.left != w.right

    def test_rejects_other_grades(self):
        d = FinDist({"a": Fraction(1)})
        with pytest.raises(ValueError):
            glogic.separating_modality_probe(d, d, parse_word("1:1"))

    @given(
        st.lists(st.integers(0, 8), min_size=3, max_size=3),
        st.integers(0, 2),
        st.integers(1, 3),
    )
    @settings(max_examples=60)
    def test_planted_difference_is_found(self, base, where, bump):
        carrier = ("a", "b", "c")
        w = [Fraction(b) for b in base]
        mu = FinSubDist({x: v / 40 for x, v in zip(carrier, w)})
        shifted = list(w)
        shifted[where] += bump
        nu = FinSubDist({x: v / 40 for x, v in zip(carrier, shifted)})
        res = glogic.separating_modality_probe(mu, nu, parse_word("2:0"))
        assert res is not glogic.EQUAL
        # independent check of the threshold rule on the indicator of the target
        assert (mu[res.target] >= res.threshold) == res.left
        assert (nu[res.target] >= res.threshold) == res.right
        assert res.left != res.right


labels = st.sampled_from(["yes", "no"])
probs = st.sampled_from([Fraction(0), Fraction(1, 4), HALF, Fraction(1)])
delays = st.sampled_from([Fraction(1, 10), Fraction(1), Fraction(3, 2)])

boolean_formulas = st.recursive(
    st.just(TOP),
    lambda sub: st.one_of(
        sub.map(Not),
        st.tuples(sub, sub).map(lambda ab: And(*ab)),
        st.tuples(labels, sub, probs).map(lambda t: Label(*t)),
        st.tuples(delays, sub, probs).map(lambda t: Delay(*t)),
    ),
    max_leaves=6,
)
quant_formulas = st.recursive(
    st.just(TOP),
    lambda sub: st.one_of(
        st.tuples(probs, sub, sub).map(lambda t: Mix(*t)),
        st.tuples(labels, sub).map(lambda t: Label(*t)),
        st.tuples(delays, sub).map(lambda t: Delay(*t)),
    ),
    max_leaves=6,
)


@given(boolean_formulas | quant_formulas)
def test_print_parse_roundtrip(f):
    text = format_formula(f)
    assert parse_formula(text) == f
    assert format_formula(parse_formula(text)) == text
