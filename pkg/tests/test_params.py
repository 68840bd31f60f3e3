import math
import warnings
from dataclasses import replace

import pytest

from hydrounit.errors import ConfigError, ParameterError
from hydrounit.params import (
    GeneratorRatings,
    GovernorParams,
    UnitParams,
    damper_resistances_from_formulas,
    derive_params,
)


def test_x_ad_from_ratings():
    der = derive_params(GeneratorRatings())
    assert der.x_ad == pytest.approx(1.396, abs=1e-12)


def test_x_r_from_ratings():
    der = derive_params(GeneratorRatings())
    assert der.x_r == pytest.approx(1.6946, abs=5e-5)


def test_rotor_time_constants():
    gen = GeneratorRatings()
    der = derive_params(gen, r_rd=0.1246, r_rq=0.0823)
    assert gen.omega0 == pytest.approx(14.954, abs=1e-3)
    assert der.T_rq == pytest.approx(0.7604, abs=5e-4)
    assert der.T_rd == pytest.approx(0.8666, abs=5e-4)


def test_degenerate_transient_reactance_rejected():
    gen = GeneratorRatings(x_d=0.43, x_d_prime=0.43)
    with pytest.raises(ParameterError):
        derive_params(gen)


def test_invalid_rating_names_key():
    with pytest.raises(ParameterError) as ei:
        UnitParams(gen=GeneratorRatings(x_d=-1.0))
    assert ei.value.key == "gen.x_d"
    assert isinstance(ei.value, ConfigError)


def test_inconsistent_derived_values_rejected(params):
    bad = replace(params.der, x_rd=params.der.x_rd * 1.1)
    with pytest.raises(ParameterError):
        UnitParams(der=bad)
    relaxed = UnitParams(der=bad, check_derived=False)
    assert relaxed.der.x_rd == bad.x_rd


def test_damper_formula_warns():
    with pytest.warns(RuntimeWarning):
        r_rd, r_rq = damper_resistances_from_formulas(GeneratorRatings())
    assert r_rd > 0 and r_rq > 0


def test_with_gamma_scales_voltage(params):
    p = params.with_gamma(0.89)
    assert p.U == pytest.approx(0.89 * params.gen.U_nom)
    assert params.gamma == 1.0


def test_governor_validation():
    with pytest.raises(ParameterError) as ei:
        UnitParams(gov=GovernorParams(mu_min=0.9, mu_max=0.5))
    assert ei.value.key.startswith("gov.")


def test_to_dict_roundtrip_fields(params):
    d = params.to_dict()
    assert d["gen"]["x_d"] == 1.58
    assert math.isclose(d["gamma"], 1.0)
