import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from viscoindent import doe
from viscoindent.constitutive import PARAM_NAMES, MaterialParams
from viscoindent.contact import LDCurve, LoadSchedule, forward_indentation, sneddon_depth
from viscoindent.errors import DivisionGuardError, InvalidInputError
from viscoindent.study import BURGER_LEVELS, BURGER_OPTIM

TABLE_SMALL = dict(sources=("Modulus", "Yield", "Hardening"), ss=(5272, 268843, 17288), dfs=(3, 3, 3),
                   error_ss=17094, error_df=6, total_ss=308498, total_df=15)
TABLE_L27 = dict(sources=("E", "C_s", "m_s", "C_t", "m_t", "t_eps"),
                 ss=(5597885401, 16004929654, 22166899947, 6207522908, 14961103, 92652), dfs=(2,) * 6,
                 error_ss=10793843, error_df=14, total_ss=50003085508, total_df=26)


# --- designs --------------------------------------------------------------

def test_degrees_of_freedom():
    assert doe.degrees_of_freedom([4, 4, 4]) == 9
    assert doe.degrees_of_freedom([3] * 6) == 12
    assert doe.degrees_of_freedom([2]) == 1
    assert doe.degrees_of_freedom([3, 3, 4], interactions=[(0, 2)]) == 2 + 2 + 3 + 6
    with pytest.raises(InvalidInputError):
        doe.degrees_of_freedom([1, 3])


def test_published_rows():
    assert tuple(doe.orthogonal_array("L16_modified").assignments[6]) == (2, 3, 4)
    L27 = doe.orthogonal_array("L27")
    assert tuple(L27.assignments[11]) == (2, 1, 2, 3, 3, 1)
    vals = BURGER_LEVELS.substitute(L27.assignments)[11]
    assert np.allclose(vals, [3.25, 0.02, 0.25, 0.35, 0.8, 0.1])


@pytest.mark.parametrize("kind", doe.SUPPORTED_ARRAYS)
def test_arrays_balanced_and_orthogonal(kind):
    oa = doe.orthogonal_array(kind)
    assert oa.is_balanced() and oa.is_orthogonal()


def test_l27_balance_counts():
    A = doe.orthogonal_array("L27").assignments
    for col in A.T:
        assert np.array_equal(np.bincount(col)[1:], [9, 9, 9])


def test_unbalanced_detection():
    oa = doe.OrthogonalArray("x", np.array([[1, 1], [1, 2], [2, 1]]))
    assert not oa.is_balanced() and not oa.is_orthogonal()


def test_unsupported_array_lists_supported():
    with pytest.raises(InvalidInputError, match="L27"):
        doe.orthogonal_array("L8")


def test_factor_levels_validation():
    with pytest.raises(InvalidInputError):
        doe.FactorLevels(("a",), ((1.0, 1.0),))
    with pytest.raises(InvalidInputError):
        doe.FactorLevels(("a", "b"), ((1.0, 2.0),))


def test_full_factorial():
    three = doe.FactorLevels("abc", ((1, 2, 3), (1, 2, 3, 4), (1, 2, 3)))
    assert doe.full_factorial(three).shape == (36, 3)
    big = doe.FactorLevels("abcdef", ((1, 2, 3), (1, 2, 3, 4), (1, 2, 3, 4), (1, 2, 3), (1, 2), (1,)))
    assert doe.full_factorial(big).shape == (288, 6)
    one = doe.full_factorial(doe.FactorLevels("a", ((5.0,),)))
    assert one.tolist() == [[5.0]]
    X = doe.full_factorial(doe.FactorLevels("ab", ((0, 1), (0, 1))))
    assert X.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]


def test_design_csv():
    text = doe.orthogonal_array("L27").to_csv(list(BURGER_LEVELS.names))
    lines = text.splitlines()
    assert lines[0] == "run,E,C_s,m_s,C_t,m_t,t_eps" and len(lines) == 28
    assert lines[12] == "12,2,1,2,3,3,1"


# --- error functions ------------------------------------------------------

def test_error_rms_relative():
    h = np.array([10.0, 20.0, 40.0])
    assert doe.error_rms_relative(h, h) == 0
    assert doe.error_rms_relative(1.1 * h, h) == pytest.approx(0.1)
    assert doe.error_rms_relative([1.3, 1.4], [1.0, 1.0]) == pytest.approx(0.35355, abs=1e-5)
    with pytest.raises(DivisionGuardError):
        doe.error_rms_relative([1.0, 1.0], [0.0, 1.0])
    with pytest.raises(InvalidInputError):
        doe.error_rms_relative([1.0], [1.0, 2.0])


def test_error_mse():
    h = np.linspace(1, 5, 9)
    assert doe.error_mse(h, h) == 0
    assert doe.error_mse(h + 2, h) == pytest.approx(4)
    assert doe.error_mse(h ** 2, h) == doe.error_mse(h, h ** 2)


def test_error_functions_accept_curves():
    cur = forward_indentation(BURGER_OPTIM, LoadSchedule.triangular(1.0, 30.0))
    assert doe.error_mse(cur, cur) == 0
    assert doe.error_rms_relative(cur.h[1:], cur.h[1:]) == 0


@given(st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_error_functions_reorder_invariant(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(1, 2, 20), rng.uniform(1, 2, 20)
    perm = rng.permutation(20)
    assert doe.error_mse(a[perm], b[perm]) == pytest.approx(doe.error_mse(a, b), rel=1e-12)
    assert doe.error_rms_relative(a[perm], b[perm]) == pytest.approx(doe.error_rms_relative(a, b), rel=1e-12)
    assert doe.error_mse(a, b) > 0


def test_resample_to_grid_identity_and_shift():
    sim = forward_indentation(BURGER_OPTIM, LoadSchedule.triangular(1.0, 30.0))
    same = doe.resample_to_grid(sim, sim)
    assert np.allclose(same.h, sim.h)
    fine = forward_indentation(BURGER_OPTIM, LoadSchedule.triangular(1.0, 30.0, 400))
    coarse = doe.resample_to_grid(fine, sim)
    assert np.array_equal(coarse.P, sim.P)
    assert doe.error_rms_relative(coarse.h[1:], sim.h[1:]) < 5e-3


# --- ANOVA ----------------------------------------------------------------

def test_anova_small_table():
    t = doe.anova_from_ss(**TABLE_SMALL)
    ms = [r.ms for r in t.rows]
    assert np.allclose(ms, [1757, 89614, 5763], atol=0.5)
    assert [round(r.F, 2) for r in t.rows] == [0.62, 31.45, 2.02]
    # the printed contributions round inconsistently; all agree to the last digit
    assert np.allclose([r.pct for r in t.rows], [1.70, 87.14, 5.60], atol=0.01)
    assert [round(r.P, 3) for r in t.rows] == [0.629, 0.0, 0.212]
    assert t.error_ms == pytest.approx(2849)


def test_anova_l27_table():
    t = doe.anova_from_ss(**TABLE_L27)
    assert np.allclose([r.pct for r in t.rows], [11.20, 32.01, 44.34, 12.42, 0.03, 0.00], atol=0.01)
    assert np.allclose([r.F for r in t.rows], [3630.33, 10379.48, 14375.63, 4025.69, 9.70, 0.06], atol=0.01)
    assert [round(r.P, 3) for r in t.rows] == [0.0, 0.0, 0.0, 0.0, 0.002, 0.942]
    assert sum(r.pct for r in t.rows) <= 100


@pytest.mark.parametrize("F,d1,d2", [(0.62, 3, 6), (2.02, 3, 6), (9.7, 2, 14), (0.06, 2, 14), (1.0, 5, 40)])
def test_f_survival_against_density_integral(F, d1, d2):
    dens = lambda x: stats.f.pdf(x, d1, d2)  # noqa: E731
    ref = 1.0 - integrate.quad(dens, 0, F)[0]
    assert doe.f_sf(F, d1, d2) == pytest.approx(ref, rel=1e-6)


def test_anova_constant_responses():
    oa = doe.orthogonal_array("L27")
    t = doe.anova(oa, BURGER_LEVELS, np.full(27, 3.0))
    assert all(r.ss == 0 and r.pct == 0 for r in t.rows)


def test_anova_single_factor_response():
    oa = doe.orthogonal_array("L27")
    y = oa.assignments[:, 0].astype(float)
    t = doe.anova(oa, BURGER_LEVELS, y)
    # direct sum of squares: 9 runs per level, level means 1, 2, 3 around 2
    assert t.rows[0].ss == pytest.approx(9 * (1 + 0 + 1))
    assert t.rows[0].pct == pytest.approx(100)
    assert all(r.pct == pytest.approx(0, abs=1e-9) for r in t.rows[1:])


def test_anova_saturated_design():
    oa = doe.OrthogonalArray("full", np.array([[1], [2]]))
    t = doe.anova(oa, doe.FactorLevels(("a",), ((0, 1),)), [1.0, 3.0])
    assert t.error_df == 0 and t.rows[0].F is None and t.rows[0].P is None
    assert t.rows[0].pct == pytest.approx(100)


def test_anova_rejects_wrong_length():
    with pytest.raises(InvalidInputError):
        doe.anova(doe.orthogonal_array("L27"), BURGER_LEVELS, np.ones(26))


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_anova_decomposition(seed):
    y = np.random.default_rng(seed).lognormal(size=27)
    t = doe.anova(doe.orthogonal_array("L27"), BURGER_LEVELS, y)
    assert sum(r.ss for r in t.rows) + t.error_ss == pytest.approx(t.total_ss, rel=1e-6)
    assert sum(r.pct for r in t.rows) <= 100 + 1e-9
    assert t.total_df == 26 and t.error_df == 14


def test_anova_render():
    t = doe.anova_from_ss(**TABLE_SMALL)
    text = t.to_text()
    assert "Yield" in text and "Error" in text and "Total" in text
    widths = {len(line) for line in text.splitlines() if line.strip()}
    assert len(widths) == 1
    csv = t.to_csv().splitlines()
    assert csv[0].startswith("source,DF") and len(csv) == 6


# --- extreme sensitivity --------------------------------------------------

def _burgers_forward(schedule):
    def run(x):
        p = dict(zip(BURGER_LEVELS.names, x), nu=0.34)
        return forward_indentation(MaterialParams(**{n: p[n] for n in PARAM_NAMES}), schedule)

    return run


def test_extremes_collapsed_bounds():
    base = BURGER_OPTIM.as_vector()
    base = [base[PARAM_NAMES.index(n)] for n in BURGER_LEVELS.names]
    deltas = doe.extreme_sensitivity([(v, v) for v in base], base,
                                     _burgers_forward(LoadSchedule.triangular(1.0, 30.0)),
                                     names=BURGER_LEVELS.names)
    assert all(v == 0 for d in deltas for v in d.deltas.values())


def test_extremes_burger_levels():
    base = [3.25, 0.06, 0.25, 0.25, 0.5, 0.25]
    deltas = doe.extreme_sensitivity(BURGER_LEVELS.bounds(), base,
                                     _burgers_forward(LoadSchedule.triangular(1.0, 30.0)),
                                     names=BURGER_LEVELS.names)
    by = {d.parameter: d.deltas for d in deltas}
    assert by["C_s"]["residual_depth"] > 10
    assert abs(by["t_eps"]["residual_depth"]) < 0.01 * abs(by["C_s"]["residual_depth"])
    assert abs(by["t_eps"]["max_depth"]) < 0.01 * abs(by["C_s"]["max_depth"])
    assert by["E"]["max_depth"] < 0
    text = doe.extremes_csv(deltas)
    assert text.splitlines()[0] == "parameter,lo,hi,delta_max_depth,delta_residual_depth"


def test_extremes_elastic_modulus_scaling():
    sched = LoadSchedule.triangular(1.0, 30.0)
    nu = 0.34

    def elastic(x):
        return forward_indentation(MaterialParams(E=x[0], nu=nu, C_s=0, m_s=0.2, C_t=0, m_t=0.5, t_eps=0.25), sched)

    (d,) = doe.extreme_sensitivity([(3.0, 3.5)], [3.25], elastic, names=["E"])
    # the reduced model is pinned to the cone solution at E = 3.28 and scales as 1/E
    E_ref = 3.28
    h_ref = sneddon_depth(1.0, E_ref / (1 - nu ** 2))
    expected = h_ref * E_ref * (1 / 3.5 - 1 / 3.0)
    assert d.deltas["max_depth"] == pytest.approx(expected, rel=1e-9)


def test_extremes_baseline_outside_bounds():
    with pytest.raises(InvalidInputError):
        doe.extreme_sensitivity([(0, 1)], [2.0], lambda x: None)


def test_ldcurve_feature_values():
    cur = LDCurve([0, 1, 2], [0, 1, 0], [0, 10, 3])
    assert doe.curve_features(cur) == {"max_depth": 10.0, "residual_depth": 3.0}
