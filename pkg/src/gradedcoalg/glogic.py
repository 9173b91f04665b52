"""Modal logics over the composite coalgebra.

Two instances are shipped:

* ``BOOLEAN``: truth values ``{False, True}``, operators ``!`` and ``&``,
  threshold modalities ``(b)_p`` ("label ``b`` is observed with probability at
  least ``p`` and the argument holds") and ``<r>_p`` ("after time ``r`` the
  argument holds with probability at least ``p``").
* ``QUANTITATIVE``: truth values in ``[0, 1]``, weighted choice ``+_p``,
  expectation modalities ``(b)`` and ``<r>``.

Concrete syntax::

    formula := T | ! formula | formula & formula | formula +_p formula
             | (label) [_p] formula | <time> [_p] formula | ( formula )

``!`` binds tightest, then ``&``, then ``+_p``; binary operators associate to
the left.  A threshold suffix selects the Boolean modalities.
"""

from __future__ import annotations

import itertools
import random
import re
import threading
import weakref
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, Sequence

from .ctmc import LabelledModel, ModelValidationError, disjoint_union
from .findist import (
    FinDist,
    FinSubDist,
    dirac,
    flatten,
    grid_distributions,
    pushforward,
    strength,
)
from .gcoalg import coalgebra_of
from .timealg import LABEL_STEP, SamplingWord, as_time, delay, format_time, samp_mul

FLOAT_SLACK = 1e-12


# ---------------------------------------------------------------------------
# syntax


@dataclass(frozen=True)
class Const:
    """The truth constant ``T``."""

    def __hash__(self):
        return 0x7F


@dataclass(frozen=True)
class Prop:
    """Propositional operator: ``not`` (one argument), ``and`` or ``mix`` (two)."""

    op: str
    args: tuple
    weight: Fraction | None = None

    def __post_init__(self):
        arity = {"not": 1, "and": 2, "mix": 2}
        if self.op not in arity:
            raise ValueError(f"unknown propositional operator {self.op!r}")
        if len(self.args) != arity[self.op]:
            raise ValueError(f"{self.op} takes {arity[self.op]} arguments")
        if (self.op == "mix") != (self.weight is not None):
            raise ValueError("only mix carries a weight")
        if self.weight is not None:
            w = Fraction(self.weight)
            if not 0 <= w <= 1:
                raise ValueError(f"mix weight {w} outside [0, 1]")
            object.__setattr__(self, "weight", w)
        object.__setattr__(self, "_h", hash((self.op, self.args, self.weight)))

    def __hash__(self):
        return self._h


@dataclass(frozen=True)
class Modal:
    """``kind`` is ``label`` (param: label name) or ``delay`` (param: time)."""

    kind: str
    param: Any
    arg: Any
    threshold: Fraction | None = None

    def __post_init__(self):
        if self.kind == "label":
            object.__setattr__(self, "param", str(self.param))
        elif self.kind == "delay":
            object.__setattr__(self, "param", as_time(self.param))
        else:
            raise ValueError(f"unknown modality kind {self.kind!r}")
        if self.threshold is not None:
            p = Fraction(self.threshold)
            if not 0 <= p <= 1:
                raise ValueError(f"threshold {p} outside [0, 1]")
            object.__setattr__(self, "threshold", p)
        object.__setattr__(self, "_h", hash((self.kind, self.param, self.arg, self.threshold)))

    def __hash__(self):
        return self._h

    @property
    def depth(self) -> SamplingWord:
        return LABEL_STEP if self.kind == "label" else delay(self.param)


TOP = Const()


def Not(a):
    return Prop("not", (a,))


def And(a, b):
    return Prop("and", (a, b))


def Mix(p, a, b):
    return Prop("mix", (a, b), Fraction(p))


def Label(b, arg, p=None):
    return Modal("label", b, arg, p)


def Delay(r, arg, p=None):
    return Modal("delay", r, arg, p)


class FormulaSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?(?:/\d+)?)|(?P<ident>[A-Za-z][A-Za-z0-9_]*)|(?P<mix>\+_)|(?P<sym>[!&()<>_]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise FormulaSyntaxError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, labels):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.labels = None if labels is None else set(labels)
        self.flavour: str | None = None
        self.flavour_at = 0

    def peek(self, k: int = 0):
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        tok = self.take()
        if tok[1] != value or tok[0] not in ("sym", "mix"):
            raise FormulaSyntaxError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        return tok

    def use(self, flavour: str, offset: int):
        if self.flavour is None:
            self.flavour, self.flavour_at = flavour, offset
        elif self.flavour != flavour:
            raise FormulaSyntaxError(
                f"{flavour} operator mixed with {self.flavour} operator from offset {self.flavour_at}", offset
            )

    def number(self, what: str, unit: bool) -> Fraction:
        tok = self.take()
        if tok[0] != "num":
            raise FormulaSyntaxError(f"expected {what}, found {tok[1] or 'end of input'!r}", tok[2])
        try:
            v = Fraction(tok[1])
        except ZeroDivisionError:
            raise FormulaSyntaxError(f"invalid {what} {tok[1]!r}", tok[2]) from None
        if unit and v > 1:
            raise FormulaSyntaxError(f"{what} {tok[1]} outside [0, 1]", tok[2])
        return v

    def threshold(self):
        if self.peek()[:2] == ("sym", "_"):
            tok = self.take()
            self.use("boolean", tok[2])
            return self.number("probability", True)
        return None

    def parse(self):
        f = self.mix()
        tok = self.peek()
        if tok[0] != "end":
            raise FormulaSyntaxError(f"unexpected {tok[1]!r}", tok[2])
        return f

    def mix(self):
        left = self.conj()
        while self.peek()[0] == "mix":
            tok = self.take()
            self.use("quantitative", tok[2])
            p = self.number("probability", True)
            left = Mix(p, left, self.conj())
        return left

    def conj(self):
        left = self.unary()
        while self.peek()[:2] == ("sym", "&"):
            tok = self.take()
            self.use("boolean", tok[2])
            left = And(left, self.unary())
        return left

    def unary(self):
        kind, value, off = self.peek()
        if kind == "ident" and value == "T":
            self.take()
            return TOP
        if (kind, value) == ("sym", "!"):
            self.take()
            self.use("boolean", off)
            return Not(self.unary())
        if (kind, value) == ("sym", "<"):
            self.take()
            r = self.number("time", False)
            self.expect(">")
            p = self.threshold()
            if p is None:
                self.use("quantitative", off)
            return Delay(r, self.unary(), p)
        if (kind, value) == ("sym", "("):
            nxt, close = self.peek(1), self.peek(2)
            if nxt[0] == "ident" and nxt[1] != "T" and close[:2] == ("sym", ")"):
                self.take()
                self.take()
                self.take()
                if self.labels is not None and nxt[1] not in self.labels:
                    raise FormulaSyntaxError(f"unknown label {nxt[1]!r}", nxt[2])
                p = self.threshold()
                if p is None:
                    self.use("quantitative", off)
                return Label(nxt[1], self.unary(), p)
            self.take()
            inner = self.mix()
            self.expect(")")
            return inner
        raise FormulaSyntaxError(f"expected a formula, found {value or 'end of input'!r}", off)


def parse_formula(text: str, labels: Iterable[str] | None = None):
    """Parse concrete syntax; ``labels`` (optional) restricts label names."""
    return _Parser(text, labels).parse()


def format_formula(f) -> str:
    """Canonical text: binary operators are always parenthesized."""
    if isinstance(f, Const):
        return "T"
    if isinstance(f, Prop):
        if f.op == "not":
            return "!" + format_formula(f.args[0])
        a, b = (format_formula(x) for x in f.args)
        if f.op == "and":
            return f"({a} & {b})"
        return f"({a} +_{format_time(f.weight)} {b})"
    if isinstance(f, Modal):
        head = f"({f.param})" if f.kind == "label" else f"<{format_time(f.param)}>"
        if f.threshold is not None:
            head += f"_{format_time(f.threshold)}"
        return f"{head} {format_formula(f.arg)}"
    raise TypeError(f"not a formula: {f!r}")


def formula_flavour(f) -> str | None:
    """``"boolean"``, ``"quantitative"`` or ``None`` when only ``T`` occurs."""
    if isinstance(f, Const):
        return None
    if isinstance(f, Prop):
        own = "quantitative" if f.op == "mix" else "boolean"
        subs = [formula_flavour(a) for a in f.args]
    else:
        own = "boolean" if f.threshold is not None else "quantitative"
        subs = [formula_flavour(f.arg)]
    for s in subs:
        if s not in (None, own):
            raise ValueError("formula mixes Boolean and quantitative operators")
    return own


def modal_depth(f) -> int:
    """Number of nested modalities along the deepest branch."""
    if isinstance(f, Const):
        return 0
    if isinstance(f, Prop):
        return max(modal_depth(a) for a in f.args)
    return 1 + modal_depth(f.arg)


def subformulas(f) -> list:
    out = [f]
    if isinstance(f, Prop):
        for a in f.args:
            out.extend(subformulas(a))
    elif isinstance(f, Modal):
        out.extend(subformulas(f.arg))
    return out


# ---------------------------------------------------------------------------
# instances


def _is_exact(v) -> bool:
    return isinstance(v, (int, Fraction)) and not isinstance(v, bool)


def _at_least(value, p) -> bool:
    if _is_exact(value):
        return value >= p
    return value >= float(p) - FLOAT_SLACK


def expectation(mu: FinSubDist):
    """The algebra structure on ``[0, 1]``: expected value ``sum mu(v) * v``."""
    return sum((w * v for v, w in mu.items()), Fraction(0))


@dataclass(frozen=True)
class LogicInstance:
    name: str
    flavour: str
    top: Any
    props: Mapping[str, Callable]
    label_modality: Callable  # (label, threshold, mu over (label, value)) -> value
    delay_modality: Callable  # (threshold, mu over values) -> value
    algebra: Callable | None = None
    relaxed_props: Mapping[str, Callable] | None = None
    relaxed_modalities: tuple | None = None

    def accepts(self, f) -> bool:
        try:
            fl = formula_flavour(f)
        except ValueError:
            return False
        return fl in (None, self.flavour)


def _bool_label(b, p, mu):
    return _at_least(sum((w for (b2, v), w in mu.items() if b2 == b and v), Fraction(0)), p)


def _bool_delay(p, mu):
    return _at_least(sum((w for v, w in mu.items() if v), Fraction(0)), p)


def _quant_label(b, p, mu):
    return sum((w * v for (b2, v), w in mu.items() if b2 == b), Fraction(0))


def _quant_delay(p, mu):
    return expectation(mu)


BOOLEAN = LogicInstance(
    name="bool",
    flavour="boolean",
    top=True,
    props={"not": lambda a: not a, "and": lambda a, b: a and b},
    label_modality=_bool_label,
    delay_modality=_bool_delay,
    algebra=expectation,
    # truth values embedded in [0, 1]: the multilinear extensions of the connectives
    relaxed_props={"not": lambda a: 1 - a, "and": lambda a, b: a * b},
    relaxed_modalities=(
        lambda b, p, mu: Fraction(int(_quant_label(b, p, mu) >= p)),
        lambda p, mu: Fraction(int(expectation(mu) >= p)),
    ),
)


QUANTITATIVE = LogicInstance(
    name="quant",
    flavour="quantitative",
    top=Fraction(1),
    props={"mix": lambda a, b, p: p * a + (1 - p) * b},
    label_modality=_quant_label,
    delay_modality=_quant_delay,
    algebra=expectation,
)

INSTANCES = {"bool": BOOLEAN, "boolean": BOOLEAN, "quant": QUANTITATIVE, "quantitative": QUANTITATIVE}


def instance_named(name: str) -> LogicInstance:
    try:
        return INSTANCES[name]
    except KeyError:
        raise ValueError(f"unknown logic {name!r}; expected bool or quant") from None


# ---------------------------------------------------------------------------
# evaluation


class Evaluator:
    """Evaluates formulas at every state of a system, memoizing subformulas."""

    def __init__(self, system, instance: LogicInstance):
        if instance is QUANTITATIVE and getattr(system, "partial", False):
            raise ModelValidationError(
                "quantitative logic needs full-distribution kernels; add a sink state to the model"
            )
        self.system = system
        self.instance = instance
        self.coalg = coalgebra_of(system)
        self._memo: dict = {}
        self._lock = threading.RLock()

    def values(self, f) -> dict:
        with self._lock:
            hit = self._memo.get(f)
            if hit is not None:
                return hit
            v = self._compute(f)
            self._memo[f] = v
            return v

    def _compute(self, f) -> dict:
        inst = self.instance
        states = self.system.states
        if isinstance(f, Const):
            return {x: inst.top for x in states}
        if not inst.accepts(f):
            raise ValueError(f"formula {format_formula(f)!r} is not in the {inst.name} logic")
        if isinstance(f, Prop):
            args = [self.values(a) for a in f.args]
            op = inst.props[f.op]
            if f.op == "mix":
                return {x: op(args[0][x], args[1][x], f.weight) for x in states}
            return {x: op(*(a[x] for a in args)) for x in states}
        arg = self.values(f.arg)
        kernel = self.coalg.at(f.depth)
        out = {}
        for x in states:
            if f.kind == "label":
                mu = pushforward(kernel[x], lambda a: (a[0][0], arg[a[1]]))
                out[x] = inst.label_modality(f.param, f.threshold, mu)
            else:
                mu = pushforward(kernel[x], lambda a: arg[a[1]])
                out[x] = inst.delay_modality(f.threshold, mu)
        return out


_EVALUATORS: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
_EVAL_LOCK = threading.Lock()


def evaluator(system, instance: LogicInstance) -> Evaluator:
    with _EVAL_LOCK:
        per = _EVALUATORS.setdefault(system, {})
        ev = per.get(instance.name)
        if ev is None:
            ev = Evaluator(system, instance)
            per[instance.name] = ev
        return ev


def _as_formula(f, system):
    if isinstance(f, str):
        return parse_formula(f, getattr(system, "labels", None))
    return f


def evaluate(f, system, instance: LogicInstance) -> dict:
    """Truth value of ``f`` at every state."""
    return evaluator(system, instance).values(_as_formula(f, system))


def eval_boolean(f, m, x) -> bool:
    return evaluate(f, m, BOOLEAN)[x]


def eval_quantitative(f, m, x):
    return evaluate(f, m, QUANTITATIVE)[x]


# ---------------------------------------------------------------------------
# uniform depth and trace semantics


@dataclass(frozen=True)
class NotUniform:
    subterm: Any
    depths: tuple

    def __str__(self):
        return f"not uniform at {format_formula(self.subterm)}: depths {', '.join(map(str, self.depths))}"


def uniform_depth(f):
    """The grade ``k`` of a uniform-depth formula, else :class:`NotUniform`."""
    if isinstance(f, Const):
        return SamplingWord()
    if isinstance(f, Prop):
        ds = [uniform_depth(a) for a in f.args]
        for d in ds:
            if isinstance(d, NotUniform):
                return d
        if any(d != ds[0] for d in ds):
            return NotUniform(f, tuple(ds))
        return ds[0]
    d = uniform_depth(f.arg)
    if isinstance(d, NotUniform):
        return d
    return samp_mul(f.depth, d)


def _trace_value(f, nu: FinSubDist):
    if isinstance(f, Const):
        return nu.mass
    if isinstance(f, Prop):
        a, b = (_trace_value(x, nu) for x in f.args)
        return f.weight * a + (1 - f.weight) * b
    if f.kind == "delay":
        return _trace_value(f.arg, nu)
    tails: dict = {}
    for w, p in nu.items():
        if w and w[0] == f.param:
            tails[w[1:]] = tails.get(w[1:], 0) + p
    return _trace_value(f.arg, FinSubDist(tails))


def trace_semantics(f, instance: LogicInstance = QUANTITATIVE) -> Callable[[FinSubDist], Any]:
    """Evaluate a uniform-depth formula directly on a distribution of label words.

    ``(b) phi`` keeps the words starting with ``b`` (unnormalized) and drops
    the head; ``<r> phi`` leaves the distribution alone since time passing
    yields no labels; ``T`` is the total mass.
    """
    if instance is not QUANTITATIVE:
        raise ValueError("trace semantics is defined for the quantitative logic only")
    k = uniform_depth(f)
    if isinstance(k, NotUniform):
        raise ValueError(str(k))
    if not QUANTITATIVE.accepts(f):
        raise ValueError("formula is not quantitative")
    n = k.count

    def run(nu: FinSubDist):
        for w in nu:
            if len(w) != n:
                raise ValueError(f"trace atom {w!r} has length {len(w)}, expected {n}")
        return _trace_value(f, nu)

    return run


# ---------------------------------------------------------------------------
# axiom checks for trace logics


@dataclass
class AxiomCheck:
    counts: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def failed_checks(self) -> set:
        return {f[0] for f in self.failures}

    def record(self, name, ok, witness):
        self.counts[name] = self.counts.get(name, 0) + 1
        if not ok:
            self.failures.append((name, witness))


UNIT_GRID = (Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))


def _random_dist(rng: random.Random, carrier: Sequence, den: int = 12) -> FinDist:
    k = rng.randint(1, min(3, len(carrier)))
    atoms = rng.sample(list(carrier), k)
    cuts = sorted(rng.randint(0, den) for _ in range(k - 1))
    parts = [b - a for a, b in zip([0] + cuts, cuts + [den])]
    return FinDist({a: Fraction(p, den) for a, p in zip(atoms, parts) if p})


def _mixture(pairs) -> FinDist:
    acc: dict = {}
    for atom, w in pairs:
        acc[atom] = acc.get(atom, 0) + w
    return FinDist(acc)


def trace_logic_axiom_check(
    instance: LogicInstance = QUANTITATIVE,
    labels: Sequence[str] = ("yes", "no"),
    n_random: int = 50,
    seed: int = 0,
) -> AxiomCheck:
    """Check the trace-logic conditions on grid and random inputs, exactly.

    (i) ``o`` is an algebra (unit and multiplication laws); (ii) each
    propositional operator commutes with ``o``; (iii) both modal diagrams.
    For the Boolean logic the truth values are embedded in ``[0, 1]`` with
    their multilinear extensions.
    """
    o = instance.algebra
    props = instance.relaxed_props or instance.props
    rng = random.Random(seed)
    report = AxiomCheck()
    grid = list(UNIT_GRID)
    values = grid
    flat = grid_distributions(values, (Fraction(0), Fraction(1, 2), Fraction(1)))
    flat += [_random_dist(rng, values) for _ in range(n_random)]

    # (i) algebra laws
    for v in values:
        report.record("algebra-unit", o(dirac(v)) == v, v)
    nested = [_mixture([(rng.choice(flat), Fraction(1, 2)), (rng.choice(flat), Fraction(1, 2))])
              for _ in range(n_random)]
    for dd in nested:
        report.record("algebra-mult", o(flatten(dd)) == o(pushforward(dd, o)), dd)

    # (ii) propositional operators
    pairs = [(a, b) for a in values for b in values]
    pair_dists = grid_distributions(pairs[::3], (Fraction(0), Fraction(1, 2), Fraction(1)))
    pair_dists += [_random_dist(rng, pairs) for _ in range(n_random)]
    pair_dists.append(FinDist({(Fraction(1), Fraction(1)): Fraction(1, 2), (Fraction(0), Fraction(0)): Fraction(1, 2)}))
    for name, op in props.items():
        if name == "not":
            for mu in flat:
                lhs = op(o(mu))
                rhs = o(pushforward(mu, op))
                report.record("prop-not", lhs == rhs, mu)
        elif name == "mix":
            for p in (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)):
                for mu in pair_dists:
                    left = o(pushforward(mu, lambda ab: ab[0]))
                    right = o(pushforward(mu, lambda ab: ab[1]))
                    lhs = op(left, right, p)
                    rhs = o(pushforward(mu, lambda ab: op(ab[0], ab[1], p)))
                    report.record("prop-mix", lhs == rhs, (p, mu))
        else:
            for mu in pair_dists:
                left = o(pushforward(mu, lambda ab: ab[0]))
                right = o(pushforward(mu, lambda ab: ab[1]))
                lhs = op(left, right)
                rhs = o(pushforward(mu, lambda ab: op(*ab)))
                report.record(f"prop-{name}", lhs == rhs, mu)

    # (iii) modal diagrams
    if instance.relaxed_modalities is not None:
        label_sem, delay_sem = instance.relaxed_modalities
    else:
        label_sem, delay_sem = instance.label_modality, instance.delay_modality
    thresholds = (None,) if instance is QUANTITATIVE else (Fraction(1, 4), Fraction(1, 2))
    lab_carrier = [(b, v) for b in labels for v in (Fraction(0), Fraction(1, 2), Fraction(1))]
    for p in thresholds:
        # left diagram: M_t M_e Omega, flatten-then-modality vs algebra-then-modality
        for _ in range(n_random):
            inner = [_random_dist(rng, values) for _ in range(2)]
            xi = _mixture([(inner[0], Fraction(1, 3)), (inner[1], Fraction(2, 3))])
            report.record("modal-left-delay", delay_sem(p, flatten(xi)) == delay_sem(p, pushforward(xi, o)), (p, xi))
            b = rng.choice(list(labels))
            xl = _mixture([((b, inner[0]), Fraction(1, 2)), ((labels[-1], inner[1]), Fraction(1, 2))])
            flat_l = flatten(pushforward(xl, lambda bv: strength(bv[0], bv[1])))
            report.record(
                "modal-left-label",
                label_sem(b, p, flat_l) == label_sem(b, p, pushforward(xl, lambda bv: (bv[0], o(bv[1])))),
                (p, xl),
            )
            # right diagram: M_e M_t Omega, modality-then-algebra vs flatten-then-modality
            outer = _mixture([(inner[0], Fraction(1, 2)), (inner[1], Fraction(1, 2))])
            report.record(
                "modal-right-delay",
                o(pushforward(outer, lambda mu: delay_sem(p, mu))) == delay_sem(p, flatten(outer)),
                (p, outer),
            )
            lmus = [_random_dist(rng, lab_carrier) for _ in range(2)]
            outer_l = _mixture([(lmus[0], Fraction(1, 2)), (lmus[1], Fraction(1, 2))])
            report.record(
                "modal-right-label",
                o(pushforward(outer_l, lambda mu: label_sem(b, p, mu))) == label_sem(b, p, flatten(outer_l)),
                (p, outer_l),
            )
    return report


@dataclass
class UniformityReport:
    counts: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def g_uniformity_check(labels: Sequence[str] = ("yes", "no"), carrier: Sequence = ("x", "y"), tail_len: int = 1,
                       n_random: int = 40, seed: int = 0) -> UniformityReport:
    """Split-coequalizer identities for both generator kinds with ``M = D``.

    Objects are built over ``B^n x X`` with ``n = tail_len``.  For the label
    generator the coequalizer is ``q = strength; flatten``; for the delay
    generator it is plain ``flatten``.
    """
    rng = random.Random(seed)
    base = [(w, x) for w in itertools.product(labels, repeat=tail_len) for x in carrier]
    rep = UniformityReport()

    def record(name, ok, witness):
        rep.counts[name] = rep.counts.get(name, 0) + 1
        if not ok:
            rep.failures.append((name, witness))

    def inner():
        return _random_dist(rng, base)

    # label generator (0,1): A = D(B x D(base)), Q = D(B^{n+1} x X), Z = D(B x D D(base))
    def q(d):
        return flatten(pushforward(d, lambda bn: pushforward(bn[1], lambda wx, b=bn[0]: ((b,) + wx[0], wx[1]))))

    def s(d):
        return pushforward(d, lambda wx: (wx[0][0], dirac((wx[0][1:], wx[1]))))

    def f1(d):
        return pushforward(d, lambda bn: (bn[0], flatten(bn[1])))

    def f2(d):
        return flatten(pushforward(d, lambda bn: pushforward(bn[1], lambda nu, b=bn[0]: (b, nu))))

    def s2(d):
        return pushforward(d, lambda bn: (bn[0], pushforward(bn[1], dirac)))

    for _ in range(n_random):
        a = _mixture([((rng.choice(labels), inner()), Fraction(1, 3)), ((rng.choice(labels), inner()), Fraction(2, 3))])
        qd = q(a)
        record("label q.s = id", q(s(qd)) == qd, qd)
        record("label f1.s' = id", f1(s2(a)) == a, a)
        record("label f2.s' = s.q", f2(s2(a)) == s(q(a)), a)
        nu1, nu2 = inner(), inner()
        nn = _mixture([(nu1, Fraction(1, 2)), (nu2, Fraction(1, 2))])
        z = _mixture([((labels[0], nn), Fraction(1, 2)), ((labels[-1], dirac(inner())), Fraction(1, 2))])
        record("label q.f1 = q.f2", q(f1(z)) == q(f2(z)), z)

    # delay generator (r,0): coequalizer of D D D => D D -> D
    for _ in range(n_random):
        nu1, nu2 = inner(), inner()
        dd = _mixture([(nu1, Fraction(1, 4)), (nu2, Fraction(3, 4))])
        d = flatten(dd)
        record("delay q.s = id", flatten(dirac(d)) == d, d)
        record("delay f2.s' = id", flatten(dirac(dd)) == dd, dd)
        record("delay f1.s' = s.q", pushforward(dirac(dd), flatten) == dirac(flatten(dd)), dd)
        ddd = _mixture([(dd, Fraction(1, 2)), (dirac(nu2), Fraction(1, 2))])
        record("delay q.f1 = q.f2", flatten(pushforward(ddd, flatten)) == flatten(flatten(ddd)), ddd)
    return rep


# ---------------------------------------------------------------------------
# formula budgets and enumeration


DEFAULT_TIMES = (Fraction(1, 10), Fraction(1, 2), Fraction(1), Fraction(2), Fraction(5))
DEFAULT_THRESHOLDS = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))
DEFAULT_WEIGHTS = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))


@dataclass(frozen=True)
class FormulaBudget:
    """Bounds on the formulas enumerated for quotients, searches and invariance checks.

    ``prop_levels`` is the number of modal levels (counting from the constants)
    at which propositional operators are applied during syntactic enumeration.
    """

    max_depth: int = 3
    thresholds: tuple = DEFAULT_THRESHOLDS
    times: tuple = DEFAULT_TIMES
    mix_weights: tuple = DEFAULT_WEIGHTS
    prop_levels: int = 1
    obs_thresholds: bool = True

    def __post_init__(self):
        if self.max_depth < 0 or self.prop_levels < 0:
            raise ValueError("budgets must be nonnegative")
        object.__setattr__(self, "times", tuple(sorted({as_time(t) for t in self.times})))
        object.__setattr__(self, "thresholds", tuple(sorted({Fraction(p) for p in self.thresholds})))
        object.__setattr__(self, "mix_weights", tuple(sorted({Fraction(p) for p in self.mix_weights})))
        if not self.times or not self.thresholds:
            raise ValueError("time and threshold grids must be nonempty")

    @classmethod
    def default(cls, instance: LogicInstance) -> "FormulaBudget":
        return cls(max_depth=2) if instance is BOOLEAN else cls(max_depth=3)

    def threshold_grid(self, systems: Sequence) -> tuple:
        ps = set(self.thresholds)
        if self.obs_thresholds:
            for m in systems:
                for d in m.obs.values():
                    ps.update(Fraction(w) for w in d.values() if not isinstance(w, float))
        return tuple(sorted(p for p in ps if 0 < p <= 1))


def _modalities(instance: LogicInstance, labels: Sequence[str], budget: FormulaBudget, thresholds):
    """Constructors in enumeration order: labels first, then delays."""
    ops = []
    if instance is BOOLEAN:
        ops += [("label", b, p) for b in labels for p in thresholds]
        ops += [("delay", r, p) for r in budget.times for p in thresholds]
    else:
        ops += [("label", b, None) for b in labels]
        ops += [("delay", r, None) for r in budget.times]
    return ops


def enumerate_formulas(instance: LogicInstance, labels: Sequence[str], budget: FormulaBudget,
                       systems: Sequence = ()) -> list:
    """Syntactic enumeration ordered by modal depth, constructor and parameters."""
    thresholds = budget.threshold_grid(systems)
    ops = _modalities(instance, labels, budget, thresholds)
    base = [TOP] + ([Not(TOP)] if instance is BOOLEAN and budget.prop_levels > 0 else [])
    out = list(base)
    prev = base
    for depth in range(1, budget.max_depth + 1):
        new = [Modal(kind, param, arg, p) for kind, param, p in ops for arg in prev]
        level = list(new)
        if depth <= budget.prop_levels:
            if instance is BOOLEAN:
                level += [Not(f) for f in new]
                level += [And(a, b) for a, b in itertools.combinations(new, 2)]
            else:
                for w in budget.mix_weights:
                    level += [Mix(w, a, b) for a, b in itertools.combinations(new, 2)]
        out.extend(level)
        prev = level
    return out


def _value_key(v, tol: float):
    if isinstance(v, bool):
        return v
    return round(float(v) / tol) if tol > 0 else v


@dataclass
class SemanticLevels:
    """Representatives of distinct value vectors, in enumeration order."""

    states: tuple
    formulas: list  # (formula, values dict)


def _semantic_closure(system, instance: LogicInstance, budget: FormulaBudget, labels, tol: float,
                      extra_systems=()) -> SemanticLevels:
    ev = evaluator(system, instance)
    states = tuple(system.states)
    thresholds = budget.threshold_grid((system,) + tuple(extra_systems))
    ops = _modalities(instance, labels, budget, thresholds)
    reps: dict = {}
    ordered: list = []

    def add(f) -> bool:
        vals = ev.values(f)
        key = tuple(_value_key(vals[x], tol) for x in states)
        if key in reps:
            return False
        reps[key] = f
        ordered.append((f, vals))
        return True

    def close(fresh: list, level: int) -> None:
        if level > budget.prop_levels:
            return
        if instance is BOOLEAN:
            frontier = list(fresh)
            rounds = 0
            while frontier and rounds < 8:
                rounds += 1
                made = []
                for f, _ in frontier:
                    g = Not(f)
                    if add(g):
                        made.append(ordered[-1])
                pool = list(ordered)
                for (f, _), (g, _) in itertools.product(frontier, pool):
                    if f is g:
                        continue
                    if add(And(f, g)):
                        made.append(ordered[-1])
                frontier = made
        else:
            for w in budget.mix_weights:
                for (f, _), (g, _) in itertools.combinations(list(fresh), 2):
                    add(Mix(w, f, g))

    add(TOP)
    close(list(ordered), 0)
    for level in range(1, budget.max_depth + 1):
        args = list(ordered)
        start = len(ordered)
        for kind, param, p in ops:
            for f, _ in args:
                add(Modal(kind, param, f, p))
        close(ordered[start:], level)
    return SemanticLevels(states, ordered)


def _blocks(states, formulas, tol: float):
    groups: dict = {}
    for x in states:
        key = tuple(_value_key(vals[x], tol) for _, vals in formulas)
        groups.setdefault(key, []).append(x)
    return tuple(tuple(g) for g in groups.values())


def logical_quotient(m, instance: LogicInstance = BOOLEAN, budget: FormulaBudget | None = None,
                     tol: float = 1e-8):
    """Partition of states by agreement on every budgeted formula."""
    budget = budget or FormulaBudget.default(instance)
    levels = _semantic_closure(m, instance, budget, m.labels, tol)
    return _blocks(levels.states, levels.formulas, tol)


def find_distinguishing_formula(m1, x, m2=None, y=None, instance: LogicInstance = BOOLEAN,
                                budget: FormulaBudget | None = None, tol: float = 1e-8):
    """First budgeted formula (enumeration order) separating ``x`` from ``y``, or ``None``."""
    budget = budget or FormulaBudget.default(instance)
    if m2 is None or m2 is m1:
        system, a, b = m1, x, (x if y is None else y)
    else:
        system, inj1, inj2 = disjoint_union(m1, m2)
        a, b = inj1[x], inj2[y]
    if a == b:
        return None
    levels = _semantic_closure(system, instance, budget, system.labels, tol)
    for f, vals in levels.formulas:
        va, vb = vals[a], vals[b]
        if isinstance(va, bool):
            if va != vb:
                return f
        elif abs(float(va) - float(vb)) > tol:
            return f
    return None


# ---------------------------------------------------------------------------
# separating probe


@dataclass(frozen=True)
class ProbeWitness:
    """``lambda_q`` applied to the indicator of ``target`` gives different truth values."""

    kind: str  # "label" or "delay"
    param: Any
    threshold: Any
    target: Any
    left: bool
    right: bool

    def describe(self) -> str:
        head = f"({self.param})" if self.kind == "label" else f"<{format_time(self.param)}>"
        return f"{head}_{self.threshold} on indicator of {self.target!r}"


EQUAL = "equal"


def _indicator_value(kind, param, q, mu, target):
    if kind == "delay":
        return _bool_delay(q, pushforward(mu, lambda x: x == target))
    return _bool_label(param, q, pushforward(mu, lambda bx: (bx[0], bx[1] == target)))


def separating_modality_probe(mu: FinSubDist, nu: FinSubDist, grade: SamplingWord, tol: float = 0,
                              carrier: Iterable | None = None):
    """Threshold modality on an indicator function telling ``mu`` from ``nu``.

    For a delay grade the carrier is a state set; for the label grade atoms
    are ``(label, state)`` pairs.  Returns :data:`EQUAL` when no atom differs
    by more than ``tol``.
    """
    if grade == LABEL_STEP:
        kind, param = "label", None
        for d in (mu, nu):
            for a in d:
                if not (isinstance(a, tuple) and len(a) == 2):
                    raise ValueError(f"label grade needs (label, state) atoms, got {a!r}")
    elif len(grade.segments) == 1 and grade.segments[0][1] == 0:
        kind, param = "delay", grade.segments[0][0]
    else:
        raise ValueError(f"{grade} is not a generator grade (r:0 or 0:1)")
    if carrier is not None:
        allowed = set(carrier)
        for a in set(mu) | set(nu):
            if a not in allowed:
                raise ValueError(f"atom {a!r} is outside the carrier")
    atoms = sorted(set(mu) | set(nu), key=repr)
    for a in atoms:
        if abs(mu[a] - nu[a]) > tol:
            q = max(mu[a], nu[a])
            if kind == "label":
                b, target = a
            else:
                b, target = param, a
            left = _indicator_value(kind, b, q, mu, target)
            right = _indicator_value(kind, b, q, nu, target)
            if left == right:
                raise AssertionError("probe construction failed to separate")  # pragma: no cover
            return ProbeWitness(kind, b, q, target, left, right)
    return EQUAL


# ---------------------------------------------------------------------------
# invariance


@dataclass
class InvarianceReport:
    checked: int = 0
    skipped_nonuniform: int = 0
    disagreements: list = field(default_factory=list)  # (pair, formula, left, right)

    @property
    def agree(self) -> bool:
        return not self.disagreements


def invariance_suite(m, instance: LogicInstance, pairs: Sequence[tuple], budget: FormulaBudget | None = None,
                     m2=None, tol: float = 1e-8, formulas: Sequence | None = None) -> InvarianceReport:
    """Compare formula values across state pairs (``y`` taken from ``m2`` when given).

    For the quantitative logic only uniform-depth formulas are compared.
    """
    budget = budget or FormulaBudget.default(instance)
    m2 = m if m2 is None else m2
    if formulas is None:
        formulas = enumerate_formulas(instance, m.labels, budget, (m, m2))
    e1, e2 = evaluator(m, instance), evaluator(m2, instance)
    report = InvarianceReport()
    for f in formulas:
        if instance is QUANTITATIVE and isinstance(uniform_depth(f), NotUniform):
            report.skipped_nonuniform += 1
            continue
        v1, v2 = e1.values(f), e2.values(f)
        for x, y in pairs:
            report.checked += 1
            a, b = v1[x], v2[y]
            same = a == b if isinstance(a, bool) else abs(float(a) - float(b)) <= tol
            if not same:
                report.disagreements.append(((x, y), f, a, b))
    return report
