"""Graded coalgebras over sampling intervals, traces and equivalence checks.

The central object is the composite coalgebra: for a sampling word
``(t_0, k_0, ..., t_n, k_n)`` a state first evolves for ``t_0``, is then
observed ``k_0`` times (independent draws from ``obs`` at the state reached,
which does not move), evolves for ``t_1`` and so on.  Its value at a state is a
distribution over pairs ``(label_word, final_state)``, where ``label_word`` is
a tuple of labels.
"""

from __future__ import annotations

import itertools
import threading
import weakref
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .ctmc import (
    LabelledModel,
    ModelValidationError,
    disjoint_union,
    eigen_solution,
    kernel_at,
    lumpable_partition,
    quotient_model,
)
from .findist import (
    EPS_MASS,
    FinDist,
    FinSubDist,
    bind,
    dirac,
    dist_distance,
    power,
    pushforward,
    uniform,
)
from .timealg import SamplingWord, TimeLike, as_time, format_word, samp_mul

EPS_COMP = 1e-8

StateMap = dict  # state -> FinSubDist over (label_word, state)


def _build(acc: dict, full: bool) -> FinSubDist:
    atoms = {k: v for k, v in acc.items() if v != 0}
    if full:
        try:
            return FinDist(atoms)
        except ValueError:
            pass
    return FinSubDist(atoms)


def kleisli_compose(first: Mapping, second: Mapping) -> StateMap:
    """Sequence two word-indexed kernels, concatenating label words."""
    out = {}
    for x, d in first.items():
        acc: dict = {}
        full = isinstance(d, FinDist)
        for (w1, y), p in d.items():
            d2 = second[y]
            full = full and isinstance(d2, FinDist)
            for (w2, z), q in d2.items():
                key = (w1 + w2, z)
                acc[key] = acc.get(key, 0) + p * q
        out[x] = _build(acc, full)
    return out


def map_distance(a: Mapping, b: Mapping) -> float:
    """Largest atom-wise difference over all states."""
    return max((dist_distance(a[x], b[x]) for x in a), default=0.0)


class CompositeCoalgebra:
    """Memoized word-graded kernel of a labelled system.

    ``system`` needs ``states``, ``obs`` (state -> FinDist over labels) and
    ``kernel_dists(t)`` (state -> distribution over states).  Results are
    cached by normalized word; the cache is guarded so concurrent callers see
    one value per word.
    """

    def __init__(self, system):
        self.system = system
        self._cache: dict[SamplingWord, StateMap] = {}
        self._lock = threading.RLock()

    @property
    def states(self):
        return self.system.states

    def _segment(self, t: Fraction, k: int) -> StateMap:
        moved = self.system.kernel_dists(t)
        obs = self.system.obs
        draws = {y: power(obs[y], k) for y in self.states} if k else None
        out = {}
        for x in self.states:
            d = moved[x]
            if not k:
                out[x] = pushforward(d, lambda y: ((), y))
                continue
            acc: dict = {}
            full = isinstance(d, FinDist)
            for y, p in d.items():
                for word, q in draws[y].items():
                    key = (tuple(word), y)
                    acc[key] = acc.get(key, 0) + p * q
            out[x] = _build(acc, full)
        return out

    def at(self, word: SamplingWord) -> StateMap:
        if not isinstance(word, SamplingWord):
            word = SamplingWord(tuple(word))
        with self._lock:
            hit = self._cache.get(word)
            if hit is not None:
                return hit
            segs = word.segments
            if len(segs) == 1:
                t, k = segs[0]
                if t == 0 and k == 0:
                    value = {x: dirac(((), x)) for x in self.states}
                else:
                    value = self._segment(t, k)
            else:
                head = SamplingWord(segs[:1])
                tail = SamplingWord(segs[1:])
                value = kleisli_compose(self.at(head), self.at(tail))
            self._cache[word] = value
            return value


_COALGEBRAS: "weakref.WeakKeyDictionary[Any, CompositeCoalgebra]" = weakref.WeakKeyDictionary()
_REGISTRY_LOCK = threading.Lock()


def coalgebra_of(system) -> CompositeCoalgebra:
    with _REGISTRY_LOCK:
        c = _COALGEBRAS.get(system)
        if c is None:
            c = CompositeCoalgebra(system)
            _COALGEBRAS[system] = c
        return c


def composite_at(m, w: SamplingWord) -> StateMap:
    """Per-state distribution over ``(label_word, state)`` at grade ``w``."""
    return coalgebra_of(m).at(w)


def trace_vector(m, x, w: SamplingWord) -> FinSubDist:
    """Distribution over label words at grade ``w`` from state ``x`` (state discarded)."""
    return pushforward(composite_at(m, w)[x], lambda a: a[0])


# ---------------------------------------------------------------------------
# axiom checks


@dataclass
class AxiomReport:
    unit_exact: bool
    residuals: list = field(default_factory=list)  # (u, v, residual)
    count_mismatches: list = field(default_factory=list)
    tol: float = EPS_COMP

    @property
    def worst(self) -> float:
        return max((r for _, _, r in self.residuals), default=0.0)

    @property
    def passed(self) -> bool:
        return self.unit_exact and self.worst <= self.tol and not self.count_mismatches


def check_graded_axioms(m, pairs: Iterable[tuple[SamplingWord, SamplingWord]], tol: float = EPS_COMP) -> AxiomReport:
    """Unit axiom (exact) and multiplication axiom on the given word pairs."""
    coalg = coalgebra_of(m)
    unit = coalg.at(SamplingWord())
    unit_exact = all(unit[x] == dirac(((), x)) for x in coalg.states)
    report = AxiomReport(unit_exact, tol=tol)
    for u, v in pairs:
        whole = coalg.at(samp_mul(u, v))
        composed = kleisli_compose(coalg.at(u), coalg.at(v))
        report.residuals.append((u, v, map_distance(whole, composed)))
        n = (u * v).count
        for x in coalg.states:
            if any(len(a[0]) != n for a in whole[x]):
                report.count_mismatches.append((u * v, x))
    return report


def labelling(m) -> StateMap:
    """The labelling ``x -> sum_b obs(x)(b) |((b,), x)>``."""
    return {x: pushforward(m.obs[x], lambda b, x=x: ((b,), x)) for x in m.states}


def evolution(m, t: TimeLike) -> StateMap:
    return {x: pushforward(d, lambda y: ((), y)) for x, d in m.kernel_dists(as_time(t)).items()}


def rebuild_from_generators(m, w: SamplingWord) -> StateMap:
    """Recompute the composite kernel as ``evolve(t_0) ; l^k_0 ; evolve(t_1) ; ...``.

    Uses single-draw labellings composed ``k`` times instead of the ``k``-fold
    product used by :func:`composite_at`.
    """
    ident = {x: dirac(((), x)) for x in m.states}
    lab = labelling(m)
    acc = ident
    for t, k in w.segments:
        if t:
            acc = kleisli_compose(acc, evolution(m, t))
        for _ in range(k):
            acc = kleisli_compose(acc, lab)
    return acc


@dataclass
class RoundtripReport:
    delay_residuals: dict
    label_exact: bool
    rebuild_residuals: dict
    tol: float

    @property
    def passed(self) -> bool:
        worst = max(list(self.delay_residuals.values()) + list(self.rebuild_residuals.values()), default=0.0)
        return self.label_exact and worst <= self.tol


def labelled_roundtrip_check(m, times: Sequence[TimeLike], words: Sequence[SamplingWord], tol: float = EPS_COMP) -> RoundtripReport:
    """Split the composite kernel into generators and rebuild it."""
    coalg = coalgebra_of(m)
    delay_res = {}
    for t in times:
        t = as_time(t)
        got = coalg.at(SamplingWord(((t, 0),)))
        direct = kernel_at(m.generator, t) if isinstance(m, LabelledModel) else None
        ref = evolution(m, t) if direct is None else {
            x: pushforward(direct.column(x), lambda y: ((), y)) for x in m.states
        }
        delay_res[t] = map_distance(got, ref)
    lab = labelling(m)
    got = coalg.at(SamplingWord(((0, 1),)))
    label_exact = all(got[x] == lab[x] for x in m.states)
    rebuild_res = {w: map_distance(coalg.at(w), rebuild_from_generators(m, w)) for w in words}
    return RoundtripReport(delay_res, label_exact, rebuild_res, tol)


# ---------------------------------------------------------------------------
# trace equivalence


@dataclass(frozen=True)
class EquivConfig:
    time_grid: tuple = (Fraction(1, 10), Fraction(1, 2), Fraction(1), Fraction(2), Fraction(5))
    max_segments: int = 3
    max_obs: int = 4
    tol: float = 1e-8
    exact: bool = False

    def __post_init__(self):
        grid = tuple(sorted({as_time(t) for t in self.time_grid}))
        if not grid or grid[0] == 0:
            raise ValueError("time grid must be nonempty and contain positive times only")
        if self.max_segments < 1 or self.max_obs < 0:
            raise ValueError("max_segments must be >= 1 and max_obs >= 0")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        object.__setattr__(self, "time_grid", grid)

    def bounds(self) -> dict:
        return {
            "time_grid": [str(t) for t in self.time_grid],
            "max_segments": self.max_segments,
            "max_obs": self.max_obs,
            "tol": self.tol,
        }


def _compositions(total_min: int, total_max: int, parts: int) -> list[tuple[int, ...]]:
    """Count vectors with all but the last entry positive and bounded sum."""
    out = []
    for ks in itertools.product(range(total_max + 1), repeat=parts):
        if any(k == 0 for k in ks[:-1]):
            continue
        if total_min <= sum(ks) <= total_max:
            out.append(ks)
    return out


def enumerate_words(config: EquivConfig) -> list[SamplingWord]:
    """Normalized words within the config, ordered by segments, observations, then lexicographically."""
    words = []
    first_times = (Fraction(0),) + config.time_grid
    for n in range(1, config.max_segments + 1):
        counts = sorted(_compositions(0, config.max_obs, n), key=lambda ks: (sum(ks), ks))
        for ks in counts:
            for t0 in first_times:
                for rest in itertools.product(config.time_grid, repeat=n - 1):
                    segs = tuple(zip((t0,) + rest, ks))
                    words.append(SamplingWord(segs))
    seen = set()
    unique = []
    for w in words:
        if w not in seen:
            seen.add(w)
            unique.append(w)
    unique.sort(key=lambda w: (len(w.segments), w.count, w.flat()))
    return unique


def word_key(labels: tuple) -> str:
    return "".join(labels) if labels else "ε"


def trace_to_json(d: FinSubDist) -> dict:
    return {word_key(w): (float(p) if isinstance(p, float) else str(p) if Fraction(p).denominator != 1 else int(p))
            for w, p in sorted(d.items(), key=lambda a: a[0])}


@dataclass(frozen=True)
class Distinguished:
    witness_word: SamplingWord
    trace_left: FinSubDist
    trace_right: FinSubDist
    gap: float
    exact: bool = False

    kind = "Distinguished"

    @property
    def equivalent(self) -> bool:
        return False

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "witness_word": format_word(self.witness_word),
            "trace_left": trace_to_json(self.trace_left),
            "trace_right": trace_to_json(self.trace_right),
            "gap": self.gap,
        }


@dataclass(frozen=True)
class IndistinguishableUpTo:
    bound: dict

    kind = "IndistinguishableUpTo"

    @property
    def equivalent(self) -> bool:
        return True

    def to_json(self) -> dict:
        return {"kind": self.kind, "bound": self.bound}


def _labels_compatible(m1, m2):
    if set(m1.labels) != set(m2.labels):
        raise ModelValidationError("models use different label alphabets")


def _exact_single_segment(m1, x, m2, y, config: EquivConfig):
    """Compare single-positive-segment traces as exponential polynomials in ``t``.

    Words ``(0, k0), (t, k1)`` have trace ``obs_x^{k0}(u) * sum_i c_{i,x} sum_z v_{z,i} obs_z^{k1}(w) e^{l_i t}``;
    the trace functions agree for all ``t`` iff the coefficients agree per distinct exponent.
    Returns ``(checked_pairs, first_difference)``.
    """
    e1, e2 = eigen_solution(m1.generator), eigen_solution(m2.generator)
    if e1 is None or e2 is None:
        return None
    labels = tuple(m1.labels)

    def coeffs(m, e, s, k0, k1):
        j = m.states.index(s)
        pre = power(m.obs[s], k0) if k0 else dirac(())
        table = {}
        posts = {z: (power(m.obs[z], k1) if k1 else dirac(())) for z in m.states}
        for u, pu in pre.items():
            for w in itertools.product(labels, repeat=k1):
                terms = []
                for i, lam in enumerate(e.eigenvalues):
                    amp = sum(float(e.vectors[zi, i]) * float(posts[z][w]) for zi, z in enumerate(m.states))
                    terms.append((complex(lam), float(pu) * float(e.constants[i, j]) * amp))
                table[tuple(u) + w] = terms
        return table

    def merge(terms_a, terms_b):
        groups: list[list] = []
        for sign, terms in ((1.0, terms_a), (-1.0, terms_b)):
            for lam, c in terms:
                for g in groups:
                    if abs(g[0] - lam) <= 1e-9 * max(1.0, abs(lam)):
                        g[1] += sign * c
                        break
                else:
                    groups.append([lam, sign * c])
        return max((abs(g[1]) for g in groups), default=0.0)

    checked = 0
    for k0 in range(config.max_obs + 1):
        for k1 in range(config.max_obs + 1 - k0):
            ca = coeffs(m1, e1, x, k0, k1)
            cb = coeffs(m2, e2, y, k0, k1)
            for key in sorted(set(ca) | set(cb)):
                checked += 1
                gap = merge(ca.get(key, []), cb.get(key, []))
                if gap > config.tol:
                    return checked, (k0, k1, key, gap)
    return checked, None


def trace_equivalent(m1, x, m2=None, y=None, config: EquivConfig | None = None):
    """Grid semi-decision of trace equivalence between ``x`` in ``m1`` and ``y`` in ``m2``.

    Returns :class:`Distinguished` with the first (enumeration order) word whose
    trace vectors differ by more than ``config.tol``, else
    :class:`IndistinguishableUpTo` recording the bounds that were searched.
    """
    config = config or EquivConfig()
    m2 = m1 if m2 is None else m2
    y = x if y is None else y
    _labels_compatible(m1, m2)
    c1, c2 = coalgebra_of(m1), coalgebra_of(m2)
    if x not in m1.states or y not in m2.states:
        raise KeyError(f"unknown state {x!r} or {y!r}")
    words = enumerate_words(config)
    for w in words:
        a = pushforward(c1.at(w)[x], lambda p: p[0])
        b = pushforward(c2.at(w)[y], lambda p: p[0])
        gap = dist_distance(a, b)
        if gap > config.tol:
            return Distinguished(w, a, b, gap)
    bound = config.bounds()
    bound["words_checked"] = len(words)
    if config.exact and isinstance(m1, LabelledModel) and isinstance(m2, LabelledModel):
        res = _exact_single_segment(m1, x, m2, y, config)
        if res is None:
            bound["exact"] = "unavailable"
        else:
            checked, diff = res
            if diff is not None:
                k0, k1, key, gap = diff
                bound["exact"] = {
                    "scope": "words (0:k0, t:k1) for all t",
                    "differs_at": {"k0": k0, "k1": k1, "labels": word_key(key), "coefficient_gap": gap},
                }
            else:
                bound["exact"] = {"scope": "words (0:k0, t:k1) for all t", "families_checked": checked}
    return IndistinguishableUpTo(bound)


# ---------------------------------------------------------------------------
# behavioural equivalence via lumping


@dataclass(frozen=True)
class EquivalentWitness:
    mapping: dict
    partition: tuple

    kind = "EquivalentWitness"

    @property
    def equivalent(self) -> bool:
        return True

    def to_json(self) -> dict:
        return {"kind": self.kind, "partition": [list(b) for b in self.partition], "mapping": dict(self.mapping)}


@dataclass(frozen=True)
class NoWitnessFound:
    """Lumping did not merge the states; this is *not* a proof of inequivalence."""

    refinement: tuple

    kind = "NoWitnessFound"

    @property
    def equivalent(self) -> bool:
        return False

    def to_json(self) -> dict:
        return {"kind": self.kind, "refinement": [[list(b) for b in p] for p in self.refinement]}


def behavioural_equivalent(m1: LabelledModel, x, m2: LabelledModel | None = None, y=None):
    """Look for a lumping of the disjoint union that identifies ``x`` and ``y``."""
    m2 = m1 if m2 is None else m2
    y = x if y is None else y
    _labels_compatible(m1, m2)
    union, inj1, inj2 = disjoint_union(m1, m2)
    partition, history = lumpable_partition(union)
    q = quotient_model(union, partition)
    if q.mapping[inj1[x]] == q.mapping[inj2[y]]:
        return EquivalentWitness(q.mapping, partition)
    return NoWitnessFound(tuple(history))


# ---------------------------------------------------------------------------
# N-graded systems


@dataclass(frozen=True)
class GradedStepCoalgebra:
    """A one-step kernel on a finite carrier, read as an N-graded coalgebra."""

    carrier: tuple
    step: Mapping

    def __post_init__(self):
        for x in self.carrier:
            d = self.step.get(x)
            if d is None or not d.is_full():
                raise ValueError(f"step at {x!r} must be a full distribution")
            for y in d:
                if y not in self.carrier:
                    raise ValueError(f"step at {x!r} leaves the carrier ({y!r})")

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other


def iterate_step_coalgebra(c: GradedStepCoalgebra, n: int, x) -> FinSubDist:
    """``gamma_n(x)``: the ``n``-fold Kleisli iterate of the step kernel."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    d = dirac(x)
    for _ in range(n):
        d = bind(d, lambda y: c.step[y])
    return d


def random_walk(radius: int = 6) -> GradedStepCoalgebra:
    """Fair walk on ``-radius..radius``; a step off the window stays put."""
    sites = tuple(range(-radius, radius + 1))
    half = Fraction(1, 2)
    step = {}
    for x in sites:
        acc: dict = {}
        for y in (x - 1, x + 1):
            y = min(max(y, -radius), radius)
            acc[y] = acc.get(y, 0) + half
        step[x] = FinDist(acc)
    return GradedStepCoalgebra(sites, step)


@dataclass(frozen=True)
class DiracFlow:
    """Deterministic system driven by a time action ``flow(x, t)``, with observations.

    ``flow`` must satisfy ``flow(x, 0) = x`` and ``flow(flow(x, s), t) = flow(x, s + t)``.
    """

    states: tuple
    flow: Callable[[Any, Fraction], Any]
    labels: tuple
    obs: Mapping

    def kernel_dists(self, t) -> dict:
        t = as_time(t)
        return {x: dirac(self.flow(x, t)) for x in self.states}

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other


def settling_system() -> DiracFlow:
    """Three states; any positive amount of time moves ``start`` and ``mid`` to ``rest``."""
    states = ("start", "mid", "rest")

    def flow(x, t):
        return x if t == 0 else "rest"

    obs = {
        "start": FinDist({"on": Fraction(1)}),
        "mid": FinDist({"on": Fraction(1, 3), "off": Fraction(2, 3)}),
        "rest": FinDist({"off": Fraction(1)}),
    }
    return DiracFlow(states, flow, ("on", "off"), obs)


def uniform_powerset_semantics(s: frozenset) -> FinDist:
    """The shipped graded semantics: a nonempty successor set becomes uniform."""
    if not s:
        raise ValueError("uniform semantics is undefined on the empty set")
    return uniform(sorted(s, key=repr))


def _nested_image(gamma1: Callable, s, depth: int):
    if depth == 0:
        return gamma1(s)
    return frozenset(_nested_image(gamma1, e, depth - 1) for e in s)


def powerset_iterate(gamma1: Callable[[Hashable], frozenset], n: int, x):
    """``gamma_n(x)`` as nested frozensets: ``gamma_{n+1} = gamma_n ; P^n(gamma_1)``."""
    value = x
    for i in range(n):
        value = _nested_image(gamma1, value, i)
    return value


def alpha_power(alpha: Callable[[frozenset], FinSubDist], n: int, s) -> FinSubDist:
    """``alpha^0 = eta`` and ``alpha^{n+1}(S) = alpha(S) >>= alpha^n``."""
    if n == 0:
        return dirac(s)
    return bind(alpha(s), lambda e: alpha_power(alpha, n - 1, e))


def extend_graded_semantics(
    alpha: Callable[[frozenset], FinSubDist],
    gamma1: Callable[[Hashable], frozenset],
    n: int,
    x,
) -> FinSubDist:
    """Component at ``n`` of the graded coalgebra induced by a one-step semantics."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return alpha_power(alpha, n, powerset_iterate(gamma1, n, x))
