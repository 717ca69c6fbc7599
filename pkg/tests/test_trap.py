import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selftrap.core import PowerAnchor, SystemParams, mhz, saturation_at_power, uk_to_angular
from selftrap.trap import (
    PUBLISHED_HEATING,
    HeatingModel,
    empirical_trapping_time,
    ideal_trapping_time,
    optimal_saturation,
    recoil_axis_rates,
    recoil_heating_rate,
    trap_depth,
    trapping_threshold,
    trapping_time_curve,
)

P = SystemParams()
T100 = uk_to_angular(100.0)

# frozen from tests/oracles/trap_curve_oracle.py (SI units, independent power map)
POWERS = np.linspace(0.1, 3.0, 30)
ORACLE_CURVES = {
    -1.0: [0.1302011232331702, 0.45420668445486867, 0.7687441809534599, 1.0741928164049452,
           1.3709119379903267, 1.6592423185757756, 1.93950734081248, 2.2120140917990425,
           2.4770543760896793, 2.734905654066922, 2.985831912016355, 3.2300844696333146,
           3.467902730148568, 3.6995148777743, 3.92513852673663, 4.144981325770512,
           4.359241521602307, 4.568108484629944, 4.771763199726649, 4.970378724838265,
           5.164120619813007, 5.353147347693808, 5.537610650514396, 5.71765590146918,
           5.8934224351719, 6.065043857577143, 6.232648337010987, 6.396358877640561,
           6.5562935766065005, 6.712565865945669],
    -2.0: [0.06992399018464644, 0.2886548777497918, 0.5020759310439507, 0.7103603275177326,
           0.9136738756369712, 1.112175402206067, 1.3060171155194233, 1.4953449460827497,
           1.6802988665040433, 1.8610131920249455, 2.0376168630457134, 2.2102337108899874,
           2.378982707957947, 2.5439782033273577, 2.7053301447806284, 2.8631442881615654,
           3.0175223948974135, 3.1685624184593744, 3.3163586804776157, 3.461002037174253,
           3.6025800367296714, 3.741177068153186, 3.8768745021883504, 4.00975082474573,
           4.139881763321381, 4.267340406827486, 4.3921973192321575, 4.514520647378398,
           4.6343762233270684, 4.751827661545598],
    -3.0: [0.009114132582643746, 0.1258680201806029, 0.2408581158773369, 0.3541195814573193,
           0.4656866657348648, 0.5755927339195367, 0.6838702958558069, 0.790551033186994,
           0.8956658254909802, 0.9992447754328274, 1.1013172329771665, 1.201911818701103,
           1.3010564462463845, 1.398778343947674, 1.4951040756719869, 1.5900595609026509,
           1.6836700940995433, 1.775960363365855, 1.866954468450179, 1.9566759381113787,
           2.045147746872376, 2.132392331187833, 2.2184316050494615, 2.3032869750516944,
           2.386979354939334, 2.4695291796578376, 2.5509564189259883, 2.6312805903497494,
           2.7105207720953293, 2.788695615138609],
}
ORACLE_OPTIMA = {
    -1.0: (0.7966859714427507, 14.345760976170967),
    -2.0: (0.7533763380582476, 11.139260628121193),
    -3.0: (0.8232103183502815, 9.186391023156327),
}


def curve(dc):
    d0, d1 = PUBLISHED_HEATING[dc]
    s = saturation_at_power(POWERS, mhz(dc), mhz(-1.0), P, PowerAnchor())
    return trapping_time_curve(s, HeatingModel(d0, d1, T100), P)


def test_ideal_trapping_time():
    assert ideal_trapping_time(P) == pytest.approx(49.49449765171599, rel=1e-9)
    assert abs(ideal_trapping_time(P) / 50.0 - 1) < 0.1


def test_threshold_value():
    assert trapping_threshold(HeatingModel(0.475, 0.759, T100), P) == pytest.approx(0.001958482859731272, rel=1e-9)


def test_trap_depth_at_anchor():
    assert trap_depth(0.02, P) / mhz(1.0) == pytest.approx(21.32, rel=1e-9)
    assert trap_depth(1.0, P, saturating=True) == pytest.approx(trap_depth(0.5, P))


def test_recoil_rates_split():
    y, z = recoil_axis_rates(0.1, P)
    assert y == pytest.approx(2 * z)
    assert (y + z) / 2 == pytest.approx(recoil_heating_rate(0.1, P))


@pytest.mark.parametrize("dc", [-1.0, -2.0, -3.0])
def test_curves_match_oracle(dc):
    np.testing.assert_allclose(curve(dc), ORACLE_CURVES[dc], rtol=1e-6)


@pytest.mark.parametrize("dc", [-1.0, -2.0, -3.0])
def test_optimum_matches_grid_oracle(dc):
    d0, d1 = PUBLISHED_HEATING[dc]
    s_opt, tau_max = optimal_saturation(HeatingModel(d0, d1, T100), P)
    s_ref, tau_ref = ORACLE_OPTIMA[dc]
    assert s_opt == pytest.approx(s_ref, rel=1e-5)
    assert tau_max == pytest.approx(tau_ref, rel=1e-9)


def test_reference_point():
    assert empirical_trapping_time(0.02, HeatingModel(0.475, 0.759, T100), P) == pytest.approx(1.7139, rel=1e-4)


def test_untrapped_below_threshold():
    h = HeatingModel(0.475, 0.759, T100)
    thr = trapping_threshold(h, P)
    assert empirical_trapping_time(0.5 * thr, h, P) is None
    assert empirical_trapping_time(thr, h, P) is None
    assert empirical_trapping_time(1.001 * thr, h, P) > 0


def test_ideal_limit():
    s_opt, tau = optimal_saturation(HeatingModel(0.0, 0.0, 0.0), P)
    assert tau == pytest.approx(ideal_trapping_time(P), rel=1e-5)


def test_heating_dominated_optimum_limit():
    # with d1 dominant, tau ~ (|dA| x - kT) / s, maximal at x = sqrt(kT / |dA|), x = s / (1 + s)
    h = HeatingModel(0.475, 1e8, T100)
    s_opt, _ = optimal_saturation(h, P)
    x = math.sqrt(T100 / abs(P.delta_A))
    assert s_opt == pytest.approx(x / (1 - x), rel=1e-4)
    assert s_opt > trapping_threshold(h, P)


def test_too_hot_is_never_trapped():
    h = HeatingModel(0.5, 0.5, abs(P.delta_A) * 1.01)
    assert optimal_saturation(h, P) is None
    assert math.isinf(trapping_threshold(h, P))


def test_negative_saturation_rejected():
    with pytest.raises(ValueError):
        trapping_time_curve(-0.1, HeatingModel(), P)


@settings(max_examples=60, deadline=None)
@given(
    d0=st.floats(0.0, 5.0),
    d1=st.floats(0.01, 5.0),
    temp_uK=st.floats(1.0, 500.0),
)
def test_unimodal_in_saturation(d0, d1, temp_uK):
    h = HeatingModel(d0, d1, uk_to_angular(temp_uK))
    thr = trapping_threshold(h, P)
    s = np.geomspace(thr * (1 + 1e-6), 1e4, 10_000)
    tau = trapping_time_curve(s, h, P)
    signs = np.sign(np.diff(tau))
    signs = signs[signs != 0]
    assert np.count_nonzero(np.diff(signs)) <= 1
    # rises immediately above threshold
    assert tau[1] > tau[0] > 0
