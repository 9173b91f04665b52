"""Finite continuous-time Markov chains with probabilistic observations.

Matrices use the *column* convention throughout: entry ``(k, j)`` is the rate
(or probability) of moving from state ``j`` to state ``k``, so distributions
are column vectors and ``x'(t) = A x(t)``.  Most CTMC texts use rows; be
careful when importing matrices from elsewhere.

Rates are stored exactly as fractions; floating point only appears in
transition kernels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Hashable, Mapping, Sequence

import numpy as np

from .findist import EPS_MASS, FinDist, FinSubDist, dist_eq
from .timealg import TimeLike, as_time

POISSON_TAIL = 1e-12
EIGEN_COND_MAX = 1e8


class ModelValidationError(ValueError):
    """A generator or labelled model violates its invariants."""


def _as_rate(value: Any, where: str) -> Fraction:
    if isinstance(value, bool):
        raise ModelValidationError(f"{where}: boolean is not a rate")
    try:
        if isinstance(value, float):
            return Fraction(repr(value))
        return Fraction(value)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ModelValidationError(f"{where}: cannot read {value!r} as a number") from exc


@dataclass(frozen=True)
class Generator:
    """Rate matrix over named states (column convention).

    With ``partial=True`` columns may sum to a negative value; the deficit is
    a killing rate and kernels become substochastic.
    """

    states: tuple[str, ...]
    rates: tuple[tuple[Fraction, ...], ...]
    partial: bool = False

    def __post_init__(self):
        states = tuple(str(s) for s in self.states)
        object.__setattr__(self, "states", states)
        n = len(states)
        if n == 0:
            raise ModelValidationError("generator has no states")
        if len(set(states)) != n:
            raise ModelValidationError("duplicate state names")
        if len(self.rates) != n:
            raise ModelValidationError(f"rates has {len(self.rates)} rows, expected {n}")
        rows = []
        for k, row in enumerate(self.rates):
            if len(row) != n:
                raise ModelValidationError(f"rates row {k} has {len(row)} entries, expected {n}")
            rows.append(tuple(_as_rate(v, f"rates[{k}][{j}]") for j, v in enumerate(row)))
        for j in range(n):
            for k in range(n):
                if k != j and rows[k][j] < 0:
                    raise ModelValidationError(f"negative off-diagonal rate at ({k}, {j})")
            col = sum(rows[k][j] for k in range(n))
            if col > 0 or (col != 0 and not self.partial):
                raise ModelValidationError(f"column {j} ({states[j]}) sums to {col}, expected 0")
        object.__setattr__(self, "rates", tuple(rows))

    @classmethod
    def from_rates(cls, states: Sequence[str], transitions: Mapping[tuple[str, str], Any]) -> "Generator":
        """Build from ``{(source, target): rate}``; diagonals are filled in."""
        states = tuple(states)
        idx = {s: i for i, s in enumerate(states)}
        n = len(states)
        mat = [[Fraction(0)] * n for _ in range(n)]
        for (src, dst), r in transitions.items():
            if src == dst:
                continue
            mat[idx[dst]][idx[src]] += _as_rate(r, f"rate {src}->{dst}")
        for j in range(n):
            mat[j][j] = -sum(mat[k][j] for k in range(n) if k != j)
        return cls(states, tuple(tuple(r) for r in mat))

    @property
    def size(self) -> int:
        return len(self.states)

    def index(self, state: str) -> int:
        try:
            return self.states.index(str(state))
        except ValueError:
            raise KeyError(f"unknown state {state!r}") from None

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.rates])

    def rate(self, src: str, dst: str) -> Fraction:
        return self.rates[self.index(dst)][self.index(src)]

    @property
    def uniformization_rate(self) -> float:
        return max(float(-self.rates[j][j]) for j in range(self.size))


@dataclass(frozen=True)
class Kernel:
    """Column-(sub)stochastic matrix: ``matrix[k, j]`` is the probability ``j -> k``."""

    time: Fraction
    states: tuple[str, ...]
    matrix: np.ndarray = field(compare=False)

    def prob(self, src: str, dst: str) -> float:
        return float(self.matrix[self.states.index(dst), self.states.index(src)])

    def column(self, src: str) -> FinSubDist:
        """The distribution reached from ``src``."""
        if self.time == 0:
            return FinDist({src: Fraction(1)})
        j = self.states.index(src)
        col = self.matrix[:, j]
        atoms = [(s, float(col[k])) for k, s in enumerate(self.states) if col[k] != 0.0]
        try:
            return FinDist(atoms)
        except ValueError:
            return FinSubDist(atoms)

    def dists(self) -> dict[str, FinSubDist]:
        return {s: self.column(s) for s in self.states}


def poisson_weights(rate_time: float, tail: float = POISSON_TAIL) -> np.ndarray:
    """Poisson(rate_time) probabilities ``p_0..p_N`` with ``sum_{n>N} p_n < tail``."""
    if rate_time == 0:
        return np.array([1.0])
    weights = []
    total = 0.0
    n = 0
    log_rt = math.log(rate_time)
    mode = int(rate_time)
    while True:
        w = math.exp(-rate_time + n * log_rt - math.lgamma(n + 1))
        weights.append(w)
        total += w
        if n > mode and 1.0 - total < tail:
            break
        n += 1
        if n > 10 * rate_time + 1000:
            break
    return np.array(weights)


def uniformized_exp(rates: np.ndarray, t: float, tail: float = POISSON_TAIL) -> np.ndarray:
    """``exp(rates * t)`` as a Poisson mixture of powers of ``I + rates / L``.

    ``L`` is the largest exit rate; every power is a nonnegative matrix, so the
    result is entrywise nonnegative up to rounding.
    """
    n = rates.shape[0]
    lam = float(np.max(-np.diag(rates))) if n else 0.0
    if t == 0 or lam == 0:
        return np.eye(n)
    uni = np.eye(n) + rates / lam
    # long horizons: split so each piece has a modest Poisson mean
    pieces = max(1, int(math.ceil(lam * t / 200.0)))
    dt = t / pieces
    weights = poisson_weights(lam * dt, tail / pieces)
    acc = np.zeros((n, n))
    power = np.eye(n)
    for w in weights:
        acc += w * power
        power = uni @ power
    # put the truncated tail mass back on the diagonal-free path: renormalize columns
    if pieces == 1:
        return np.clip(acc, 0.0, None)
    out = np.eye(n)
    for _ in range(pieces):
        out = acc @ out
    return np.clip(out, 0.0, None)


def expm_scaling_squaring(a: np.ndarray, order: int = 18) -> np.ndarray:
    """Matrix exponential by scaling, truncated Taylor series and squaring.

    Independent of uniformization; used as a cross-check oracle.
    """
    a = np.asarray(a, dtype=float)
    norm = np.linalg.norm(a, 1)
    s = max(0, int(math.ceil(math.log2(norm / 0.25))) if norm > 0.25 else 0)
    scaled = a / (2 ** s)
    n = a.shape[0]
    term = np.eye(n)
    acc = np.eye(n)
    for k in range(1, order + 1):
        term = term @ scaled / k
        acc = acc + term
    for _ in range(s):
        acc = acc @ acc
    return acc


def kernel_at(g: Generator, t: TimeLike) -> Kernel:
    """Transition kernel after time ``t`` by uniformization; exact identity at 0."""
    t = as_time(t)
    if t == 0:
        return Kernel(t, g.states, np.eye(g.size))
    return Kernel(t, g.states, uniformized_exp(g.matrix, float(t)))


@dataclass(frozen=True)
class EigenSolution:
    """``rates = V diag(eigenvalues) V^{-1}``, with ``constants = V^{-1}``."""

    vectors: np.ndarray
    eigenvalues: np.ndarray
    constants: np.ndarray

    def kernel_matrix(self, t: float) -> np.ndarray:
        ct = np.exp(self.eigenvalues * float(t))[:, None] * self.constants
        return np.real_if_close(self.vectors @ ct).real

    def coefficient_groups(self, tol: float = 1e-9) -> list[tuple[complex, list[int]]]:
        """Indices of eigenvalues grouped by numerical equality."""
        groups: list[tuple[complex, list[int]]] = []
        for i, lam in enumerate(self.eigenvalues):
            for g in groups:
                if abs(g[0] - lam) <= tol * max(1.0, abs(lam)):
                    g[1].append(i)
                    break
            else:
                groups.append((lam, [i]))
        return groups


def eigen_solution(g: Generator, cond_max: float = EIGEN_COND_MAX) -> EigenSolution | None:
    """Eigendecomposition of the generator, or ``None`` when it is (near) defective."""
    a = g.matrix
    vals, vecs = np.linalg.eig(a)
    cond = np.linalg.cond(vecs)
    if not np.isfinite(cond) or cond >= cond_max:
        return None
    consts = np.linalg.inv(vecs)
    if np.allclose(vals.imag, 0.0):
        vals, vecs, consts = vals.real, vecs.real, consts.real
    order = np.lexsort((np.round(np.imag(vals), 12), -np.round(np.real(vals), 12)))
    return EigenSolution(vecs[:, order], vals[order], consts[order, :])


@dataclass(frozen=True)
class LabelledModel:
    """A generator together with an observation distribution per state."""

    generator: Generator
    labels: tuple[str, ...]
    obs: Mapping[str, FinDist]
    name: str = ""

    def __post_init__(self):
        labels = tuple(str(b) for b in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(set(labels)) != len(labels):
            raise ModelValidationError("duplicate labels")
        obs = {}
        for s in self.generator.states:
            if s not in self.obs:
                raise ModelValidationError(f"no observation distribution for state {s!r}")
            d = self.obs[s]
            if not isinstance(d, FinSubDist):
                d = FinSubDist({str(k): v for k, v in dict(d).items()})
            for b in d:
                if b not in labels:
                    raise ModelValidationError(f"obs[{s!r}] uses unknown label {b!r}")
            if not d.is_full():
                raise ModelValidationError(f"obs[{s!r}] has mass {d.mass}, expected 1")
            obs[s] = d if isinstance(d, FinDist) else FinDist(d.items())
        extra = set(self.obs) - set(self.generator.states)
        if extra:
            raise ModelValidationError(f"obs given for unknown states {sorted(extra)}")
        object.__setattr__(self, "obs", obs)

    @property
    def states(self) -> tuple[str, ...]:
        return self.generator.states

    @property
    def partial(self) -> bool:
        return self.generator.partial

    def kernel(self, t: TimeLike) -> Kernel:
        return kernel_at(self.generator, t)

    def kernel_dists(self, t: TimeLike) -> dict[str, FinSubDist]:
        """Per-state distribution after time ``t``."""
        return self.kernel(t).dists()

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other

    def to_json(self) -> dict:
        return model_to_json(self)


# ---------------------------------------------------------------------------
# built-in models


def _positive(name: str, v) -> Fraction:
    q = _as_rate(v, name)
    if q <= 0:
        raise ModelValidationError(f"{name} must be positive, got {q}")
    return q


YES, NO = "yes", "no"
HALF = Fraction(1, 2)


def repairable_4state(lam=1, mu=1) -> LabelledModel:
    """Two independently failing and repaired components, tracked individually."""
    lam, mu = _positive("lambda", lam), _positive("mu", mu)
    z = Fraction(0)
    rates = (
        (-2 * mu, lam, lam, z),
        (mu, -(lam + mu), z, lam),
        (mu, z, -(lam + mu), lam),
        (z, mu, mu, -2 * lam),
    )
    gen = Generator(("0", "L", "R", "2"), rates)
    obs = {
        "0": FinDist({NO: Fraction(1)}),
        "L": FinDist({YES: HALF, NO: HALF}),
        "R": FinDist({YES: HALF, NO: HALF}),
        "2": FinDist({YES: Fraction(1)}),
    }
    return LabelledModel(gen, (YES, NO), obs, name=f"repairable4(lambda={lam},mu={mu})")


def repairable_3state(lam=1, mu=1) -> LabelledModel:
    """The same system counting working components only."""
    lam, mu = _positive("lambda", lam), _positive("mu", mu)
    z = Fraction(0)
    rates = (
        (-2 * mu, lam, z),
        (2 * mu, -(lam + mu), 2 * lam),
        (z, mu, -2 * lam),
    )
    gen = Generator(("0", "1", "2"), rates)
    obs = {
        "0": FinDist({NO: Fraction(1)}),
        "1": FinDist({YES: HALF, NO: HALF}),
        "2": FinDist({YES: Fraction(1)}),
    }
    return LabelledModel(gen, (YES, NO), obs, name=f"repairable3(lambda={lam},mu={mu})")


def random_walk_model(lam=1, mu=1, radius: int = 3) -> LabelledModel:
    """Continuous-time walk on ``-radius..radius``: left at rate ``lam``, right at ``mu``.

    Jumps leaving the window are suppressed.  The origin is observed as
    ``origin`` and every other site as ``away``.
    """
    lam, mu = _positive("lambda", lam), _positive("mu", mu)
    if radius < 1:
        raise ModelValidationError("radius must be at least 1")
    sites = list(range(-radius, radius + 1))
    states = tuple(str(x) for x in sites)
    trans = {}
    for x in sites:
        if x - 1 >= -radius:
            trans[(str(x), str(x - 1))] = lam
        if x + 1 <= radius:
            trans[(str(x), str(x + 1))] = mu
    gen = Generator.from_rates(states, trans)
    obs = {s: FinDist({"origin" if s == "0" else "away": Fraction(1)}) for s in states}
    return LabelledModel(gen, ("origin", "away"), obs, name=f"randomwalk(lambda={lam},mu={mu},radius={radius})")


def closed_form_eigendata_4state(lam, mu) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form eigenvectors, eigenvalues and constants for the 4-state model."""
    l, m = float(lam), float(mu)
    s = l + m
    v = np.array([[l * l, 0, -l, 1], [l * m, -1, l - m, -1], [l * m, 1, 0, -1], [m * m, 0, m, 1]])
    ev = np.array([0.0, -s, -s, -2 * s])
    c = np.array([
        [1, 1, 1, 1],
        [m * (m - l), -2 * l * m, l * l + m * m, l * (l - m)],
        [-2 * m, l - m, l - m, 2 * l],
        [m * m, -l * m, -l * m, l * l],
    ]) / s ** 2
    return v, ev, c


def closed_form_eigendata_3state(lam, mu) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form eigenvectors, eigenvalues and constants for the 3-state model."""
    l, m = float(lam), float(mu)
    s = l + m
    w = np.array([[l * l, -l, 1], [2 * l * m, l - m, -2], [m * m, m, 1]])
    ev = np.array([0.0, -s, -2 * s])
    d = np.array([[1, 1, 1], [-2 * m, l - m, 2 * l], [m * m, -l * m, l * l]]) / s ** 2
    return w, ev, d


def eigen_kernel(vectors: np.ndarray, eigenvalues: np.ndarray, constants: np.ndarray, t: float) -> np.ndarray:
    """``gamma_t(k|j) = sum_i c_{i,j} v_{k,i} exp(l_i t)``."""
    return vectors @ (np.exp(eigenvalues * float(t))[:, None] * constants)


# ---------------------------------------------------------------------------
# homomorphisms and lumping


def map_matrix(h: Mapping[str, str], src: Sequence[str], dst: Sequence[str]) -> np.ndarray:
    """0/1 matrix ``H`` with ``H[h(x), x] = 1``."""
    mat = np.zeros((len(dst), len(src)))
    for j, x in enumerate(src):
        if x not in h:
            raise KeyError(f"state map undefined on {x!r}")
        mat[list(dst).index(h[x]), j] = 1.0
    return mat


@dataclass
class HomomorphismReport:
    residuals: dict
    obs_failures: list
    tol: float

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.obs_failures and self.max_residual <= self.tol


DEFAULT_PROBE_TIMES = (Fraction(0), Fraction(1, 10), Fraction(1), Fraction(5))


def check_homomorphism(
    h: Mapping[str, str],
    m1: LabelledModel,
    m2: LabelledModel,
    times: Sequence[TimeLike] = DEFAULT_PROBE_TIMES,
    tol: float = 1e-8,
) -> HomomorphismReport:
    """Residuals of ``H gamma_t - delta_t H`` and observation preservation."""
    hm = map_matrix(h, m1.states, m2.states)
    residuals = {}
    for t in times:
        t = as_time(t)
        lhs = hm @ kernel_at(m1.generator, t).matrix
        rhs = kernel_at(m2.generator, t).matrix @ hm
        residuals[t] = float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0
    obs_failures = [x for x in m1.states if not dist_eq(m1.obs[x], m2.obs[h[x]], 0)]
    return HomomorphismReport(residuals, obs_failures, tol)


@dataclass
class Quotient:
    """Result of lumping: blocks of the partition and the quotient model."""

    partition: tuple[tuple[str, ...], ...]
    mapping: dict
    model: LabelledModel
    history: list = field(default_factory=list)

    def block_of(self, state: str) -> str:
        return self.mapping[state]


def block_name(block: Sequence[str]) -> str:
    return "+".join(block)


def _obs_key(d: FinDist):
    return tuple(sorted((b, Fraction(w) if not isinstance(w, float) else w) for b, w in d.items()))


def _canonical(partition: list[list[str]], order: Sequence[str]) -> tuple[tuple[str, ...], ...]:
    pos = {s: i for i, s in enumerate(order)}
    blocks = [tuple(sorted(b, key=pos.__getitem__)) for b in partition]
    return tuple(sorted(blocks, key=lambda b: pos[b[0]]))


def lumpable_partition(m: LabelledModel) -> tuple[tuple[tuple[str, ...], ...], list]:
    """Coarsest ordinarily-lumpable refinement of the observation partition.

    Returns the partition and the sequence of partitions visited.
    """
    g = m.generator
    states = g.states
    groups: dict = {}
    for s in states:
        groups.setdefault(_obs_key(m.obs[s]), []).append(s)
    partition = _canonical(list(groups.values()), states)
    history = [partition]
    while True:
        block_index = {s: i for i, b in enumerate(partition) for s in b}
        refined = []
        for block in partition:
            sig_groups: dict = {}
            for j in block:
                agg = [Fraction(0)] * len(partition)
                for k in states:
                    agg[block_index[k]] += g.rate(j, k)
                sig_groups.setdefault(tuple(agg), []).append(j)
            refined.extend(sig_groups.values())
        refined_c = _canonical(refined, states)
        if refined_c == partition:
            return partition, history
        partition = refined_c
        history.append(partition)


def quotient_model(m: LabelledModel, partition) -> Quotient:
    """Aggregate the generator over a lumpable partition."""
    g = m.generator
    names = tuple(block_name(b) for b in partition)
    mapping = {s: block_name(b) for b in partition for s in b}
    n = len(partition)
    rates = [[Fraction(0)] * n for _ in range(n)]
    for ci, block in enumerate(partition):
        rep = block[0]
        for di, target in enumerate(partition):
            rates[di][ci] = sum((g.rate(rep, k) for k in target), Fraction(0))
    gen = Generator(names, tuple(tuple(r) for r in rates), partial=g.partial)
    obs = {block_name(b): m.obs[b[0]] for b in partition}
    qm = LabelledModel(gen, m.labels, obs, name=f"quotient({m.name})")
    return Quotient(tuple(partition), mapping, qm)


def lumpability_quotient(m: LabelledModel, probe_times=DEFAULT_PROBE_TIMES, tol: float = 1e-8) -> Quotient:
    """Coarsest observation-respecting lumping and its quotient.

    The quotient map is checked as a coalgebra homomorphism at ``probe_times``
    before returning; a failure there indicates a bug and raises.
    """
    partition, history = lumpable_partition(m)
    q = quotient_model(m, partition)
    q.history = history
    report = check_homomorphism(q.mapping, m, q.model, probe_times, tol)
    if not report.passed:
        raise RuntimeError(f"quotient map failed homomorphism check: {report}")
    return q


def disjoint_union(m1: LabelledModel, m2: LabelledModel, tags=("1", "2")) -> tuple[LabelledModel, dict, dict]:
    """Block-diagonal union; returns the model and the two state injections."""
    if m1.labels != m2.labels and set(m1.labels) != set(m2.labels):
        raise ModelValidationError("models use different label alphabets")
    inj1 = {s: f"{tags[0]}:{s}" for s in m1.states}
    inj2 = {s: f"{tags[1]}:{s}" for s in m2.states}
    n1, n2 = m1.generator.size, m2.generator.size
    z = Fraction(0)
    rows = []
    for k in range(n1):
        rows.append(tuple(m1.generator.rates[k]) + (z,) * n2)
    for k in range(n2):
        rows.append((z,) * n1 + tuple(m2.generator.rates[k]))
    states = tuple(inj1.values()) + tuple(inj2.values())
    gen = Generator(states, tuple(rows), partial=m1.partial or m2.partial)
    obs = {inj1[s]: m1.obs[s] for s in m1.states}
    obs.update({inj2[s]: m2.obs[s] for s in m2.states})
    return LabelledModel(gen, m1.labels, obs, name=f"{m1.name}+{m2.name}"), inj1, inj2


# ---------------------------------------------------------------------------
# JSON model files


def _weight_to_json(w):
    if isinstance(w, float):
        return w
    w = Fraction(w)
    return w.numerator if w.denominator == 1 else f"{w.numerator}/{w.denominator}"


def model_to_json(m: LabelledModel) -> dict:
    out = {
        "states": list(m.states),
        "rates": [[_weight_to_json(v) for v in row] for row in m.generator.rates],
        "labels": list(m.labels),
        "obs": {s: {b: _weight_to_json(w) for b, w in m.obs[s].items()} for s in m.states},
    }
    if m.partial:
        out["partial"] = True
    return out


def model_from_json(data: Mapping) -> LabelledModel:
    """Validate and build a model from the JSON schema; errors name the first violation."""
    for key in ("states", "rates", "labels", "obs"):
        if key not in data:
            raise ModelValidationError(f"model file is missing field {key!r}")
    states = data["states"]
    if not isinstance(states, list) or not all(isinstance(s, str) for s in states):
        raise ModelValidationError("'states' must be a list of strings")
    rates = data["rates"]
    if not isinstance(rates, list) or not all(isinstance(r, list) for r in rates):
        raise ModelValidationError("'rates' must be a square matrix (list of lists)")
    gen = Generator(tuple(states), tuple(tuple(r) for r in rates), partial=bool(data.get("partial", False)))
    obs_raw = data["obs"]
    if not isinstance(obs_raw, Mapping):
        raise ModelValidationError("'obs' must map states to label distributions")
    obs = {}
    for s, row in obs_raw.items():
        if not isinstance(row, Mapping):
            raise ModelValidationError(f"obs[{s!r}] must map labels to weights")
        atoms = {str(b): _as_rate(w, f"obs[{s!r}][{b!r}]") for b, w in row.items()}
        for b, w in atoms.items():
            if w < 0:
                raise ModelValidationError(f"obs[{s!r}][{b!r}] is negative")
        total = sum(atoms.values(), Fraction(0))
        if total != 1:
            raise ModelValidationError(f"obs[{s!r}] sums to {total}, expected 1")
        obs[str(s)] = FinDist(atoms)
    return LabelledModel(gen, tuple(data["labels"]), obs, name=str(data.get("name", "")))


def load_model(path: str | Path) -> LabelledModel:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelValidationError(f"{path}: invalid JSON ({exc})") from exc
    return model_from_json(data)


def save_model(m: LabelledModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(m), fh, indent=2)
        fh.write("\n")
