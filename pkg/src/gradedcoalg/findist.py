"""Finitely-supported (sub)distributions and the strength distributive law.

Weights are either exact ``Fraction`` values or floats.  Mixing the two is
allowed and degrades to float, which is how kernel-derived numbers enter
otherwise exact computations.  Iteration order is insertion order, and every
constructor in the package inserts atoms in a fixed carrier order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Any, Callable, Hashable, Iterable, Iterator, Mapping, Sequence

EPS_MASS = 1e-9


def _is_exact(w) -> bool:
    return isinstance(w, (int, Fraction)) and not isinstance(w, bool)


def _exact_or_float(w):
    if isinstance(w, bool):
        raise TypeError("boolean weight")
    if isinstance(w, int):
        return Fraction(w)
    if isinstance(w, Fraction):
        return w
    if isinstance(w, Real):
        return float(w)
    raise TypeError(f"weight must be a real number, got {type(w).__name__}")


class FinSubDist(Mapping):
    """Finitely-supported subdistribution; missing mass means termination."""

    __slots__ = ("_atoms", "_hash")

    def __init__(self, atoms: Mapping[Hashable, Any] | Iterable[tuple[Hashable, Any]] = ()):
        items = atoms.items() if isinstance(atoms, Mapping) else atoms
        acc: dict = {}
        for atom, w in items:
            w = _exact_or_float(w)
            if w < 0:
                if w > -EPS_MASS and not _is_exact(w):
                    continue
                raise ValueError(f"negative weight {w} at atom {atom!r}")
            acc[atom] = acc[atom] + w if atom in acc else w
        self._atoms = {a: w for a, w in acc.items() if w != 0}
        self._hash = None
        self._validate()

    def _validate(self):
        m = self.mass
        tol = 0 if _is_exact(m) else EPS_MASS
        if m > 1 + tol:
            raise ValueError(f"total mass {m} exceeds 1")

    # Mapping protocol: missing atoms have weight 0
    def __getitem__(self, atom):
        return self._atoms.get(atom, 0)

    def __contains__(self, atom) -> bool:
        return atom in self._atoms

    def __iter__(self) -> Iterator:
        return iter(self._atoms)

    def __len__(self) -> int:
        return len(self._atoms)

    def items(self):
        return self._atoms.items()

    def __eq__(self, other) -> bool:
        if not isinstance(other, FinSubDist):
            return NotImplemented
        return self._atoms == other._atoms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._atoms.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self._atoms!r})"

    def __str__(self) -> str:
        return to_ket(self)

    @property
    def support(self) -> tuple:
        return tuple(self._atoms)

    @property
    def mass(self):
        return sum(self._atoms.values(), Fraction(0))

    @property
    def exact(self) -> bool:
        return all(_is_exact(w) for w in self._atoms.values())

    def is_full(self, tol: float = EPS_MASS) -> bool:
        m = self.mass
        if _is_exact(m):
            return m == 1
        return abs(m - 1) <= tol

    # monad structure as methods, for readability at call sites
    def bind(self, f: Callable[[Any], "FinSubDist"]) -> "FinSubDist":
        return bind(self, f)

    def map(self, g: Callable[[Any], Hashable]) -> "FinSubDist":
        return pushforward(self, g)


class FinDist(FinSubDist):
    """Finitely-supported probability distribution (mass exactly 1 or within ``EPS_MASS``)."""

    __slots__ = ()

    def _validate(self):
        m = self.mass
        if _is_exact(m):
            if m != 1:
                raise ValueError(f"distribution mass is {m}, expected 1")
        elif abs(m - 1) > EPS_MASS:
            raise ValueError(f"distribution mass is {m}, expected 1 within {EPS_MASS}")


def _result_type(full: bool):
    return FinDist if full else FinSubDist


def _make(atoms, full: bool) -> FinSubDist:
    # a full-looking result may still fall outside tolerance after float drift
    try:
        return _result_type(full)(atoms)
    except ValueError:
        if not full:
            raise
        return FinSubDist(atoms)


def dirac(x: Hashable) -> FinDist:
    """Point mass at ``x`` (the monad unit)."""
    return FinDist({x: Fraction(1)})


def bind(d: FinSubDist, f: Callable[[Any], FinSubDist]) -> FinSubDist:
    """Kleisli extension: ``sum_x d(x) * f(x)``."""
    acc: dict = {}
    full = isinstance(d, FinDist)
    for x, w in d.items():
        fx = f(x)
        if not isinstance(fx, FinSubDist):
            raise TypeError(f"bind continuation returned {type(fx).__name__}, expected a distribution")
        full = full and isinstance(fx, FinDist)
        for y, v in fx.items():
            acc[y] = acc.get(y, 0) + w * v
    return _make(acc, full)


def flatten(dd: FinSubDist) -> FinSubDist:
    """Monad multiplication on a distribution of distributions."""
    return bind(dd, lambda inner: inner)


def pushforward(d: FinSubDist, g: Callable[[Any], Hashable]) -> FinSubDist:
    """Functor action: image distribution along ``g``."""
    acc: dict = {}
    for x, w in d.items():
        y = g(x)
        acc[y] = acc.get(y, 0) + w
    return _make(acc, isinstance(d, FinDist))


def strength(b: Hashable, d: FinSubDist) -> FinSubDist:
    """Attach the fixed label ``b`` to every atom: ``(b, D X) -> D(b x X)``."""
    return _make({(b, x): w for x, w in d.items()}, isinstance(d, FinDist))


def product(d1: FinSubDist, d2: FinSubDist) -> FinSubDist:
    """Independent product over pairs."""
    acc = {(x, y): w * v for x, w in d1.items() for y, v in d2.items()}
    return _make(acc, isinstance(d1, FinDist) and isinstance(d2, FinDist))


def power(d: FinSubDist, k: int) -> FinSubDist:
    """``k`` independent draws from ``d`` as a distribution over ``k``-tuples."""
    out: FinSubDist = dirac(())
    for _ in range(k):
        out = _make(
            {xs + (x,): w * v for xs, w in out.items() for x, v in d.items()},
            isinstance(out, FinDist) and isinstance(d, FinDist),
        )
    return out


def kleisli(f: Callable[[Any], FinSubDist], g: Callable[[Any], FinSubDist]):
    """Kleisli composite ``f ; g``."""
    return lambda x: bind(f(x), g)


def dist_eq(d1: FinSubDist, d2: FinSubDist, tol: float = 0) -> bool:
    """Equality up to ``tol`` per atom; atoms lighter than ``tol`` may be missing."""
    for atom in set(d1) | set(d2):
        if abs(d1[atom] - d2[atom]) > tol:
            return False
    return True


def dist_distance(d1: FinSubDist, d2: FinSubDist) -> float:
    """Largest per-atom weight difference."""
    atoms = set(d1) | set(d2)
    if not atoms:
        return 0.0
    return max(float(abs(d1[a] - d2[a])) for a in atoms)


def uniform(xs: Iterable[Hashable]) -> FinDist:
    xs = list(dict.fromkeys(xs))
    if not xs:
        raise ValueError("uniform distribution on an empty set is undefined")
    w = Fraction(1, len(xs))
    return FinDist({x: w for x in xs})


def format_weight(w, exact: bool = False) -> str:
    if exact and _is_exact(w):
        w = Fraction(w)
        return str(w.numerator) if w.denominator == 1 else f"{w.numerator}/{w.denominator}"
    return f"{float(w):.12g}"


def to_ket(d: FinSubDist, show: Callable[[Any], str] = str, exact: bool = True) -> str:
    """Ket notation ``p|a⟩ + q|b⟩``; the empty subdistribution prints as ``0``."""
    if not len(d):
        return "0"
    return " + ".join(f"{format_weight(w, exact)}|{show(a)}⟩" for a, w in d.items())


def to_csv_rows(d: FinSubDist, show: Callable[[Any], str] = str, exact: bool = False) -> list[str]:
    return [f"{show(a)},{format_weight(w, exact)}" for a, w in d.items()]


# ---------------------------------------------------------------------------
# Graded distributive law of the writer monad (B^u x -) over D, from strength.


def writer_strength_law(word: tuple, d: FinSubDist) -> FinSubDist:
    """``lambda^{u,t}: B^u x D X -> D(B^u x X)`` induced by the strength of D."""
    return strength(word, d)


@dataclass
class LawReport:
    """Outcome of a distributive-law check; ``failures`` holds counterexamples."""

    checked: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def first_failure(self):
        return self.failures[0] if self.failures else None

    def summary(self) -> str:
        counts = ", ".join(f"{k}={v}" for k, v in self.checked.items())
        if self.passed:
            return f"pass ({counts})"
        diagram, args, lhs, rhs = self.first_failure
        return f"FAIL in {diagram} diagram ({counts}); input {args!r}: {lhs} != {rhs}"


def grid_distributions(carrier: Sequence[Hashable], grid: Sequence[Fraction]) -> list[FinDist]:
    """All full distributions on ``carrier`` whose weights lie in ``grid``."""
    grid = sorted(set(Fraction(g) for g in grid))
    carrier = list(carrier)
    out: list[FinDist] = []

    def extend(i: int, remaining: Fraction, chosen: list):
        if i == len(carrier):
            if remaining == 0:
                out.append(FinDist(dict(zip(carrier, chosen))))
            return
        for g in grid:
            if g > remaining:
                break
            chosen.append(g)
            extend(i + 1, remaining - g, chosen)
            chosen.pop()

    extend(0, Fraction(1), [])
    return out


def label_words(labels: Sequence[Hashable], max_len: int) -> list[tuple]:
    words: list[tuple] = []
    for n in range(max_len + 1):
        words.extend(itertools.product(labels, repeat=n))
    return words


def check_distributive_law(
    carrier: Sequence[Hashable],
    labels: Sequence[Hashable],
    grid: Sequence[Fraction] = (0, Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), 1),
    max_word: int = 2,
    law: Callable[[tuple, FinSubDist], FinSubDist] = writer_strength_law,
    nested_limit: int | None = None,
    stop_at_first: bool = False,
) -> LawReport:
    """Check the four distributive-law diagrams for ``law`` on enumerated inputs.

    Inputs are all label words up to ``max_word`` over ``labels`` and all grid
    distributions over ``carrier``; the multiplication diagram over the monad
    additionally ranges over grid distributions of those distributions
    (truncated to ``nested_limit`` when given).
    """
    report = LawReport()
    words = label_words(labels, max_word)
    dists = grid_distributions(carrier, grid)
    nested = grid_distributions(dists, grid) if dists else []
    if nested_limit is not None:
        nested = nested[:nested_limit]

    def record(diagram, args, lhs, rhs):
        report.checked[diagram] = report.checked.get(diagram, 0) + 1
        if lhs != rhs:
            report.failures.append((diagram, args, lhs, rhs))
            return stop_at_first
        return False

    # unit of D:  P_u -> P_u M_e -> M_e P_u  equals  eta at P_u
    for w in words:
        for x in carrier:
            if record("monad-unit", (w, x), law(w, dirac(x)), dirac((w, x))):
                return report
    # unit of the writer:  M_t -> P_e M_t -> M_t P_e  equals  M_t(eta)
    for d in dists:
        if record("writer-unit", d, law((), d), pushforward(d, lambda x: ((), x))):
            return report
    # multiplication of D
    for w in words:
        for dd in nested:
            lhs = law(w, flatten(dd))
            rhs = flatten(pushforward(law(w, dd), lambda pair: law(pair[0], pair[1])))
            if record("monad-mult", (w, dd), lhs, rhs):
                return report
    # multiplication of the writer
    for w1 in words:
        for w2 in words:
            for d in dists:
                lhs = law(w1 + w2, d)
                inner = law(w1, law(w2, d))
                rhs = pushforward(inner, lambda a: (a[0] + a[1][0], a[1][1]))
                if record("writer-mult", (w1, w2, d), lhs, rhs):
                    return report
    return report


def swap_label_law(a: Hashable, b: Hashable):
    """A deliberately broken law that exchanges two labels; used for mutation tests."""

    def swap(word: tuple) -> tuple:
        return tuple(b if x == a else a if x == b else x for x in word)

    def law(word: tuple, d: FinSubDist) -> FinSubDist:
        return strength(swap(word), d)

    return law


def check_monad_laws(
    carrier: Sequence[Hashable] = ("a", "b", "c"),
    grid: Sequence[Fraction] = (Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1)),
    kernels: int = 3,
    bind_op: Callable = bind,
    unit_op: Callable = dirac,
    seed: int = 0,
    stop_at_first: bool = False,
) -> LawReport:
    """Unit and associativity laws of ``bind_op``/``unit_op`` on every grid distribution.

    Kernels are drawn deterministically from the same grid; every combination
    of distribution and kernel pair is tried.
    """
    import random

    dists = grid_distributions(carrier, grid)
    rng = random.Random(seed)
    ks = [{x: dists[rng.randrange(len(dists))] for x in carrier} for _ in range(kernels)]
    report = LawReport()

    def record(law, args, lhs, rhs) -> bool:
        report.checked[law] = report.checked.get(law, 0) + 1
        if lhs != rhs:
            report.failures.append((law, args, lhs, rhs))
            return stop_at_first
        return False

    for x in carrier:
        for f in ks:
            if record("left-unit", x, bind_op(unit_op(x), f.__getitem__), f[x]):
                return report
    for d in dists:
        if record("right-unit", d, bind_op(d, unit_op), d):
            return report
        for f in ks:
            for g in ks:
                lhs = bind_op(bind_op(d, f.__getitem__), g.__getitem__)
                rhs = bind_op(d, lambda x: bind_op(f[x], g.__getitem__))
                if record("associativity", d, lhs, rhs):
                    return report
    return report
