import numpy as np
import pytest
from scipy.integrate import quad

from defectrecon.potentials import (PotentialKind, conductivity,
                                    conductivity_prime, double_well,
                                    double_well_prime, single_well,
                                    single_well_prime, smoothstep,
                                    smoothstep_prime, well, well_prime)


def fd(fun, t, h=1e-6):
    return (fun(t + h) - fun(t - h)) / (2 * h)


def test_smoothstep_values():
    assert smoothstep(0.0) == 0.0
    assert smoothstep(1.0) == 1.0
    assert smoothstep(0.5) == 0.5
    # clamped flat outside [0, 1]
    assert smoothstep(-0.3) == 0.0
    assert smoothstep(1.7) == 1.0
    t = np.linspace(0, 1, 101)
    assert np.all(np.diff(smoothstep(t)) >= 0)


def test_smoothstep_derivative():
    t = np.linspace(0.05, 0.95, 19)
    assert np.allclose(smoothstep_prime(t), fd(smoothstep, t), atol=1e-9)
    assert smoothstep_prime(0.0) == 0.0
    assert smoothstep_prime(1.0) == 0.0
    assert smoothstep_prime(-1.0) == 0.0
    assert smoothstep_prime(2.0) == 0.0


def test_conductivity_interpolates():
    eps = 1e-3
    assert conductivity(0.0, eps) == pytest.approx(eps ** 2, rel=1e-15)
    assert conductivity(1.0, eps) == pytest.approx(1.0, rel=1e-15)
    t = np.linspace(0, 1, 11)
    assert np.all(conductivity(t, eps) >= eps ** 2)
    assert np.all(conductivity(t, eps) <= 1.0 + 1e-15)
    # central differences straddle the clamp at the endpoints, so check the
    # derivative away from them
    ti = np.linspace(0.05, 0.95, 19)
    assert np.allclose(conductivity_prime(ti, eps),
                       fd(lambda s: conductivity(s, eps), ti), atol=1e-9)


def test_single_well():
    assert single_well(1.0) == 0.0
    assert single_well(0.0) == 0.25
    assert single_well(0.5) == 0.0625
    t = np.linspace(-0.5, 1.5, 21)
    assert np.allclose(single_well_prime(t), fd(single_well, t), atol=1e-9)
    assert single_well_prime(1.0) == 0.0
    # defined globally, not clamped
    assert single_well(2.0) == 0.25


def test_double_well():
    assert double_well(0.0) == 0.0
    assert double_well(1.0) == 0.0
    assert double_well(0.5) == 9.0 / 16.0
    t = np.linspace(-0.5, 1.5, 21)
    assert np.allclose(double_well_prime(t), fd(double_well, t), atol=1e-8)
    assert double_well_prime(0.0) == 0.0
    assert double_well_prime(1.0) == 0.0


def test_double_well_line_energy_normalization():
    # the interface energy constant is 2*int_0^1 sqrt(W); with W = 9t^2(1-t)^2
    # the integrand is 3t(1-t) and the constant must be exactly 1 so the
    # well pair (c^2/eps)*W + eps*|grad|^2 prices interfaces at c per unit
    # length
    val, err = quad(lambda t: 2.0 * np.sqrt(double_well(t)), 0.0, 1.0)
    assert err < 1e-12
    assert val == pytest.approx(1.0, abs=1e-10)


def test_well_dispatch():
    t = np.linspace(0, 1, 7)
    assert np.array_equal(well(PotentialKind.SINGLE_WELL, t), single_well(t))
    assert np.array_equal(well(PotentialKind.DOUBLE_WELL, t), double_well(t))
    assert np.array_equal(well_prime(PotentialKind.SINGLE_WELL, t),
                          single_well_prime(t))
    assert np.array_equal(well_prime(PotentialKind.DOUBLE_WELL, t),
                          double_well_prime(t))
    with pytest.raises(ValueError):
        well("triple-well", t)
    with pytest.raises(ValueError):
        well_prime(None, t)


def test_kind_round_trip():
    assert PotentialKind("single-well") is PotentialKind.SINGLE_WELL
    assert PotentialKind("double-well") is PotentialKind.DOUBLE_WELL
    with pytest.raises(ValueError):
        PotentialKind("quartic")
