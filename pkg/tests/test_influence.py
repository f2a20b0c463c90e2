import math

import numpy as np
import pytest

from hkdyn.influence import InfluenceFunction, check_influence_assumptions, validate_influence

FAMILIES = [
    InfluenceFunction.constant_one(),
    InfluenceFunction.exp_sq(),
    InfluenceFunction.exp_abs(),
    InfluenceFunction.exp_sqrt(),
    InfluenceFunction.plateau_linear(0.05, 0.6, 0.2),
    InfluenceFunction.table([0, 0.1, 0.2], [1, 0.8, 0.5]),
]


@pytest.mark.parametrize("f", FAMILIES, ids=lambda f: f.family)
def test_admissible(f):
    validate_influence(f, 0.2)
    assert float(f(0.0)) == 1.0


def test_family_values():
    d = 0.3
    assert float(InfluenceFunction.exp_sq()(d)) == pytest.approx(math.exp(-0.09))
    assert float(InfluenceFunction.exp_abs()(-d)) == pytest.approx(math.exp(-0.3))
    assert float(InfluenceFunction.exp_sqrt()(d)) == pytest.approx(math.exp(-math.sqrt(0.3)))
    plateau = InfluenceFunction.plateau_linear(0.05, 0.5, 0.2)
    assert float(plateau(0.05)) == 1.0
    assert float(plateau(0.2)) == pytest.approx(0.5)
    assert float(plateau(0.125)) == pytest.approx(0.75)


def test_constant_one_passes_everything():
    for eps in (0.01, 0.1, 0.19):
        assert check_influence_assumptions(InfluenceFunction.constant_one(), 0.2, eps).as_tuple() == (True, True, True)


@pytest.mark.parametrize("eps", [1e-3, 0.05, 0.15])
def test_exp_sq_has_no_plateau(eps):
    rep = check_influence_assumptions(InfluenceFunction.exp_sq(), 0.2, eps)
    assert not rep.plateau
    assert rep.positive_at_gamma and rep.xf_nondecreasing


def _xf_min_slope(eps, f_gamma, gamma, points=200_001):
    # Independent dense evaluation of x * f(x) for the plateau-then-line shape.
    x = np.linspace(0, gamma, points)
    f = np.where(x <= eps, 1.0, 1.0 - (x - eps) * (1.0 - f_gamma) / (gamma - eps))
    return np.min(np.diff(x * f))


def test_plateau_linear_terminal_half_breaks_xf_monotonicity():
    # x f(x) peaks near x = 0.175 for (eps, f(gamma)) = (0.05, 0.5) and then drops.
    assert _xf_min_slope(0.05, 0.5, 0.2) < 0
    rep = check_influence_assumptions(InfluenceFunction.plateau_linear(0.05, 0.5, 0.2), 0.2, 0.05)
    assert rep.as_tuple() == (True, True, False)
    assert rep.worst_violation > 0


def test_plateau_linear_threshold_for_monotone_xf():
    # Line from (eps, 1) to (gamma, fg) keeps x f(x) non-decreasing iff fg >= gamma / (2 gamma - eps).
    eps, gamma = 0.05, 0.2
    fg_min = gamma / (2 * gamma - eps)
    for fg in (fg_min + 1e-3, 0.6, 0.8, 1.0):
        assert _xf_min_slope(eps, fg, gamma) >= -1e-15
        assert check_influence_assumptions(InfluenceFunction.plateau_linear(eps, fg, gamma), gamma, eps).all_hold
    assert not check_influence_assumptions(
        InfluenceFunction.plateau_linear(eps, fg_min - 1e-2, gamma), gamma, eps
    ).xf_nondecreasing


def test_check_rejects_bad_eps():
    with pytest.raises(ValueError):
        check_influence_assumptions(InfluenceFunction.constant_one(), 0.2, 0.3)
    with pytest.raises(ValueError):
        check_influence_assumptions(InfluenceFunction.constant_one(), 0.2, 0.0)


def test_invalid_constructions():
    with pytest.raises(ValueError):
        InfluenceFunction.plateau_linear(0.3, 0.5, 0.2)
    with pytest.raises(ValueError):
        InfluenceFunction.plateau_linear(0.05, 0.0, 0.2)
    with pytest.raises(ValueError):
        InfluenceFunction.table([0, 0.1], [1, 1.2])
    with pytest.raises(ValueError):
        InfluenceFunction("GAUSSIAN")
    with pytest.raises(ValueError):
        InfluenceFunction.from_dict({"family": "EXP_SQ", "params": {}})


def test_dict_round_trip():
    for f in FAMILIES:
        assert InfluenceFunction.from_dict(f.to_dict()) == f
