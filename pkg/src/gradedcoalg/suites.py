"""Property suites run by ``gradedcoalg check``."""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import ctmc, findist, gcoalg, glogic
from .timealg import SamplingWord, count_morphism, format_word, length_morphism, samp_mul, samp_normalize


@dataclass
class SuiteResult:
    name: str
    passed: bool
    lines: list = field(default_factory=list)
    seconds: float = 0.0


def random_word(rng: random.Random, max_segments: int = 3, max_count: int = 3, den: int = 4) -> SamplingWord:
    n = rng.randint(1, max_segments)
    segs = [(Fraction(rng.randint(0, 4 * den), den) if rng.random() < 0.8 else Fraction(0), rng.randint(0, max_count))
            for _ in range(n)]
    return SamplingWord(tuple(segs))


def suite_monoid(seed: int = 0, n: int = 1000) -> SuiteResult:
    rng = random.Random(seed)
    bad = []
    unit = SamplingWord()
    for _ in range(n):
        u, v, w = (random_word(rng) for _ in range(3))
        if samp_mul(samp_mul(u, v), w) != samp_mul(u, samp_mul(v, w)):
            bad.append(("assoc", u, v, w))
        if samp_mul(unit, u) != u or samp_mul(u, unit) != u:
            bad.append(("unit", u))
        uv = samp_mul(u, v)
        if samp_normalize(uv.segments) != uv.segments:
            bad.append(("normal", u, v))
        if length_morphism(uv) != length_morphism(u) + length_morphism(v):
            bad.append(("length", u, v))
        if count_morphism(uv) != count_morphism(u) + count_morphism(v):
            bad.append(("count", u, v))
    lines = [f"{n} random triples, {len(bad)} violations"]
    lines += [f"  counterexample: {b[0]} {' '.join(map(str, b[1:]))}" for b in bad[:3]]
    return SuiteResult("monoid", not bad, lines)


def suite_monad(seed: int = 0) -> SuiteResult:
    carrier = ("a", "b", "c")
    dists = findist.grid_distributions(carrier, (Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1)))
    rng = random.Random(seed)
    fs = [{x: rng.choice(dists) for x in carrier} for _ in range(4)]
    bad = []
    for d in dists:
        if findist.bind(d, findist.dirac) != d:
            bad.append(("right-unit", d))
        for f in fs:
            for g in fs[:2]:
                lhs = findist.bind(findist.bind(d, f.__getitem__), g.__getitem__)
                rhs = findist.bind(d, lambda x: findist.bind(f[x], g.__getitem__))
                if lhs != rhs:
                    bad.append(("assoc", d))
    for x in carrier:
        for f in fs:
            if findist.bind(findist.dirac(x), f.__getitem__) != f[x]:
                bad.append(("left-unit", x))
    return SuiteResult("monad", not bad, [f"{len(dists)} distributions x {len(fs)} kernels, {len(bad)} violations"])


def suite_distributive(mutate: str | None = None) -> SuiteResult:
    law = findist.swap_label_law("y", "n") if mutate == "swap-label" else findist.writer_strength_law
    lines = []
    ok = True
    for size in (1, 2, 3):
        carrier = ("a", "b", "c")[:size]
        rep = findist.check_distributive_law(carrier, ("y", "n"), law=law, stop_at_first=mutate is not None)
        lines.append(f"carrier {size}: {rep.summary()}")
        if not rep.passed:
            ok = False
            lines.append(f"  counterexample: {rep.first_failure}")
            break
    return SuiteResult("distributive" + (f"[{mutate}]" if mutate else ""), ok, lines)


def suite_chapman(seed: int = 0, n: int = 100) -> SuiteResult:
    rng = random.Random(seed)
    lines = ["model                              worst |g_s g_t - g_(s+t)|"]
    ok = True
    for m in (ctmc.repairable_4state(1, 1), ctmc.repairable_3state(1, 1)):
        worst = 0.0
        for _ in range(n):
            s = Fraction(rng.randint(0, 500), 100)
            t = Fraction(rng.randint(0, 500), 100)
            a = ctmc.kernel_at(m.generator, s).matrix @ ctmc.kernel_at(m.generator, t).matrix
            b = ctmc.kernel_at(m.generator, s + t).matrix
            worst = max(worst, float(np.max(np.abs(a - b))))
        ident = np.array_equal(ctmc.kernel_at(m.generator, 0).matrix, np.eye(m.generator.size))
        ok = ok and worst <= 1e-8 and ident
        lines.append(f"{m.name:<34} {worst:.3e}  identity@0={'yes' if ident else 'NO'}")
    return SuiteResult("chapman", ok, lines)


def suite_eigen() -> SuiteResult:
    lines = []
    ok = True
    for m, expected in ((ctmc.repairable_4state(2, 3), [0, -5, -5, -10]), (ctmc.repairable_3state(2, 3), [0, -5, -10])):
        sol = ctmc.eigen_solution(m.generator)
        if sol is None:
            lines.append(f"{m.name}: eigendecomposition unavailable")
            ok = False
            continue
        got = sorted(np.real(sol.eigenvalues), reverse=True)
        err = max(abs(a - b) for a, b in zip(got, expected))
        rec = max(float(np.max(np.abs(sol.kernel_matrix(float(t)) - ctmc.kernel_at(m.generator, t).matrix)))
                  for t in (Fraction(1, 10), Fraction(1), Fraction(5)))
        ok = ok and err <= 1e-9 and rec <= 1e-8
        lines.append(f"{m.name}: eigenvalue error {err:.2e}, reconstruction error {rec:.2e}")
    return SuiteResult("eigen", ok, lines)


H_MAP = {"0": "0", "L": "1", "R": "1", "2": "2"}


def suite_homomorphism() -> SuiteResult:
    lines = []
    ok = True
    for lam, mu in ((2, 3), (1, 1)):
        rep = ctmc.check_homomorphism(H_MAP, ctmc.repairable_4state(lam, mu), ctmc.repairable_3state(lam, mu))
        ok = ok and rep.passed
        lines.append(f"lambda={lam} mu={mu}: max residual {rep.max_residual:.2e}, obs ok={not rep.obs_failures}")
    return SuiteResult("homomorphism", ok, lines)


def suite_lumping() -> SuiteResult:
    ok = True
    lines = []
    for lam, mu in ((1, 1), (2, 3)):
        q = ctmc.lumpability_quotient(ctmc.repairable_4state(lam, mu))
        same = q.model.generator.rates == ctmc.repairable_3state(lam, mu).generator.rates
        good = q.partition == (("0",), ("L", "R"), ("2",)) and same
        ok = ok and good
        lines.append(f"lambda={lam} mu={mu}: partition {q.partition}, generator matches 3-state: {same}")
    return SuiteResult("lumping", ok, lines)


def suite_composite(seed: int = 0, n: int = 50) -> SuiteResult:
    rng = random.Random(seed)
    ok = True
    lines = []
    for m in (ctmc.repairable_4state(1, 1), ctmc.repairable_3state(1, 1)):
        pairs = [(random_word(rng, 2, 2), random_word(rng, 2, 2)) for _ in range(n)]
        rep = gcoalg.check_graded_axioms(m, pairs)
        words = [random_word(rng, 3, 2) for _ in range(10)] + [SamplingWord.of(1, 2, 3, 1)]
        rt = gcoalg.labelled_roundtrip_check(m, [Fraction(1, 2), 1, 3], words)
        ok = ok and rep.passed and rt.passed
        worst_rt = max(list(rt.rebuild_residuals.values()) + list(rt.delay_residuals.values()))
        lines.append(f"{m.name}: unit exact={rep.unit_exact}, worst multiplication residual {rep.worst:.2e}, "
                     f"roundtrip residual {worst_rt:.2e}")
    return SuiteResult("composite", ok, lines)


def suite_trace() -> SuiteResult:
    m4, m3 = ctmc.repairable_4state(1, 1), ctmc.repairable_3state(1, 1)
    lr = gcoalg.trace_equivalent(m4, "L", m4, "R")
    oz = gcoalg.trace_equivalent(m4, "0", m4, "2")
    cross = gcoalg.trace_equivalent(m4, "L", m3, "1")
    ok = (lr.equivalent and cross.equivalent and not oz.equivalent
          and oz.witness_word == SamplingWord(((0, 1),)) and abs(oz.gap - 1) <= 1e-12)
    lines = [f"L vs R: {lr.kind}", f"0 vs 2: {oz.kind} at {format_word(oz.witness_word) if not oz.equivalent else '-'}",
             f"L vs 1 (3-state): {cross.kind}"]
    return SuiteResult("trace", ok, lines)


def suite_logic() -> SuiteResult:
    m4, m3 = ctmc.repairable_4state(1, 1), ctmc.repairable_3state(1, 1)
    lines = []
    budget = glogic.FormulaBudget.default(glogic.QUANTITATIVE)
    formulas = [f for f in glogic.enumerate_formulas(glogic.QUANTITATIVE, m4.labels, budget, (m4, m3))
                if not isinstance(glogic.uniform_depth(f), glogic.NotUniform)]
    worst = 0.0
    for m in (m4, m3):
        values = {f: glogic.evaluate(f, m, glogic.QUANTITATIVE) for f in formulas}
        for f in formulas:
            k = glogic.uniform_depth(f)
            sem = glogic.trace_semantics(f)
            for x in m.states:
                worst = max(worst, abs(float(values[f][x]) - float(sem(gcoalg.trace_vector(m, x, k)))))
    lines.append(f"factorization over {len(formulas)} uniform formulas: worst gap {worst:.2e}")
    ok = worst <= 1e-9
    q = glogic.logical_quotient(m4, glogic.BOOLEAN)
    lines.append(f"Boolean logical quotient: {q}")
    ok = ok and q == (("0",), ("L", "R"), ("2",))
    ax = glogic.trace_logic_axiom_check(glogic.QUANTITATIVE)
    uni = glogic.g_uniformity_check()
    lines.append(f"quantitative trace-logic axioms: {'pass' if ax.passed else 'FAIL'}; "
                 f"split coequalizer identities: {'pass' if uni.passed else 'FAIL'}")
    ok = ok and ax.passed and uni.passed
    return SuiteResult("logic", ok, lines)


def suite_randomwalk() -> SuiteResult:
    walk = gcoalg.random_walk(6)
    d = gcoalg.iterate_step_coalgebra(walk, 2, 0)
    target = findist.FinDist({-2: Fraction(1, 4), 0: Fraction(1, 2), 2: Fraction(1, 4)})
    ok = d == target
    bad = 0
    for total in range(7):
        for mm in range(total + 1):
            for x in walk.carrier:
                lhs = gcoalg.iterate_step_coalgebra(walk, total, x)
                rhs = findist.bind(gcoalg.iterate_step_coalgebra(walk, mm, x),
                                   lambda y: gcoalg.iterate_step_coalgebra(walk, total - mm, y))
                bad += lhs != rhs
    ok = ok and bad == 0
    return SuiteResult("randomwalk", ok, [f"gamma_2(0) = {d}", f"composition violations for m+n<=6: {bad}"])


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "monoid": suite_monoid,
    "monad": suite_monad,
    "distributive": suite_distributive,
    "chapman": suite_chapman,
    "eigen": suite_eigen,
    "homomorphism": suite_homomorphism,
    "lumping": suite_lumping,
    "composite": suite_composite,
    "trace": suite_trace,
    "logic": suite_logic,
    "randomwalk": suite_randomwalk,
}


def run_suites(names=None, mutate: str | None = None) -> list[SuiteResult]:
    names = list(names or SUITES)
    if mutate and "distributive" not in names:
        names.append("distributive")
    out = []
    for name in names:
        if name not in SUITES:
            raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
        start = time.perf_counter()
        res = SUITES[name](mutate=mutate) if name == "distributive" else SUITES[name]()
        res.seconds = time.perf_counter() - start
        out.append(res)
    return out
