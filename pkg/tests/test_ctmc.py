import json
from fractions import Fraction

import numpy as np
import pytest

from gradedcoalg import ctmc
from gradedcoalg.ctmc import ModelValidationError
from gradedcoalg.findist import FinDist, dirac
import oracles

H = {"0": "0", "L": "1", "R": "1", "2": "2"}


@pytest.fixture
def m4():
    return ctmc.repairable_4state(1, 1)


def test_generator_entries_three_state():
    g = ctmc.repairable_3state(2, 3).generator
    assert g.rate("0", "1") == 6  # 2 mu
    assert g.rate("2", "1") == 4  # 2 lambda
    assert g.rate("1", "1") == -5
    assert g.rate("0", "2") == 0


@pytest.mark.parametrize("build", [ctmc.repairable_4state, ctmc.repairable_3state, ctmc.random_walk_model])
def test_zero_time_is_identity(build):
    m = build(2, 3)
    k = m.kernel(0)
    assert np.array_equal(k.matrix, np.eye(len(m.states)))
    assert all(k.column(x) == dirac(x) for x in m.states)


@pytest.mark.parametrize("t", [Fraction(1, 10), 1, 5, 40])
def test_kernel_matches_scipy(m4, t):
    assert np.max(np.abs(m4.kernel(t).matrix - oracles.scipy_kernel(m4, t))) < 1e-10


def test_long_horizon_stays_stochastic():
    m = ctmc.random_walk_model(3, 5, radius=4)
    k = m.kernel(200).matrix
    assert np.all(k >= 0)
    assert np.allclose(k.sum(axis=0), 1, atol=1e-9)
    assert np.max(np.abs(k - oracles.scipy_kernel(m, 200))) < 1e-8


def test_own_expm_matches_scipy():
    a = ctmc.repairable_4state(2, 3).generator.matrix * 0.7
    import scipy.linalg

    assert np.max(np.abs(ctmc.expm_scaling_squaring(a) - scipy.linalg.expm(a))) < 1e-12


def test_closed_form_value(m4):
    j = m4.generator.index("2")
    # frozen from (1 + 2e^-2 + e^-4)/4 evaluated at 30 digits with mpmath
    assert m4.kernel(1).matrix[j, j] == pytest.approx(0.32224655134048989, abs=1e-12)
    assert oracles.closed_form_22() == pytest.approx(0.32224655134048989, abs=1e-15)


def test_eigen_solution_reconstructs():
    for m in (ctmc.repairable_4state(2, 3), ctmc.repairable_3state(2, 3)):
        sol = ctmc.eigen_solution(m.generator)
        for t in (0.1, 1.0, 5.0):
            assert np.max(np.abs(sol.kernel_matrix(t) - oracles.scipy_kernel(m, t))) < 1e-10


def test_closed_form_eigendata_reconstructs():
    for build, data in ((ctmc.repairable_4state, ctmc.closed_form_eigendata_4state),
                        (ctmc.repairable_3state, ctmc.closed_form_eigendata_3state)):
        m = build(2, 3)
        for t in (0.0, 0.3, 2.0):
            assert np.max(np.abs(ctmc.eigen_kernel(*data(2, 3), t) - oracles.scipy_kernel(m, t))) < 1e-12


def test_homomorphism_and_failures():
    rep = ctmc.check_homomorphism(H, ctmc.repairable_4state(2, 3), ctmc.repairable_3state(2, 3))
    assert rep.passed and rep.max_residual < 1e-8
    m = ctmc.repairable_4state(2, 3)
    ident = ctmc.check_homomorphism({x: x for x in m.states}, m, m, times=(0,))
    assert ident.residuals[0] == 0.0
    merge = {"0": "0", "L": "1", "R": "1", "2": "0"}
    bad = ctmc.check_homomorphism(merge, ctmc.repairable_4state(1, 1), ctmc.repairable_3state(1, 1))
    assert not bad.passed
    assert bad.residuals[Fraction(1)] > 1e-3
    assert "2" in bad.obs_failures


def test_lumping_and_variants():
    q = ctmc.lumpability_quotient(ctmc.repairable_4state(2, 3))
    assert q.partition == (("0",), ("L", "R"), ("2",))
    assert q.block_of("L") == q.block_of("R") != q.block_of("0")

    data = ctmc.model_to_json(ctmc.repairable_4state(1, 1))
    data["obs"]["L"] = {"yes": "1/3", "no": "2/3"}
    skewed = ctmc.model_from_json(data)
    assert ("L",) in ctmc.lumpable_partition(skewed)[0]

    distinct = ctmc.model_to_json(ctmc.repairable_3state(1, 1))
    distinct["obs"]["1"] = {"yes": "1/4", "no": "3/4"}
    part, _ = ctmc.lumpable_partition(ctmc.model_from_json(distinct))
    assert part == (("0",), ("1",), ("2",))


def test_disjoint_union_lumps_across_models():
    u, inj1, inj2 = ctmc.disjoint_union(ctmc.repairable_4state(1, 1), ctmc.repairable_3state(1, 1))
    part, _ = ctmc.lumpable_partition(u)
    block = next(b for b in part if inj1["L"] in b)
    assert set(block) == {inj1["L"], inj1["R"], inj2["1"]}


def test_json_roundtrip(tmp_path):
    m = ctmc.repairable_4state(Fraction(1, 3), 2)
    path = tmp_path / "m.json"
    ctmc.save_model(m, path)
    back = ctmc.load_model(path)
    assert back.generator.rates == m.generator.rates
    assert all(back.obs[x] == m.obs[x] for x in m.states)


@pytest.mark.parametrize(
    "patch, fragment",
    [
        (lambda d: d.pop("obs"), "missing field 'obs'"),
        (lambda d: d["rates"][1].__setitem__(0, -1), "negative"),
        (lambda d: d["obs"].__setitem__("L", {"yes": "1/2"}), "obs['L'] sums to 1/2"),
        (lambda d: d["rates"].pop(), "3 rows, expected 4"),
    ],
)
def test_validation_names_violation(patch, fragment):
    data = ctmc.model_to_json(ctmc.repairable_4state(1, 1))
    patch(data)
    with pytest.raises(ModelValidationError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        ctmc.model_from_json(data)


def test_invalid_json_file(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ModelValidationError):
        ctmc.load_model(p)


def test_nonpositive_parameters_rejected():
    with pytest.raises(ModelValidationError):
        ctmc.repairable_4state(0, 1)


def test_partial_generator_gives_subdistributions():
    data = {
        "states": ["a", "b"],
        "rates": [[-2, 0], [1, 0]],
        "labels": ["x"],
        "obs": {"a": {"x": 1}, "b": {"x": 1}},
        "partial": True,
    }
    m = ctmc.model_from_json(json.loads(json.dumps(data)))
    col = m.kernel(1).column("a")
    assert col.mass == pytest.approx(1 - (1 - np.exp(-2)) / 2, abs=1e-12)
    assert not isinstance(col, FinDist)
