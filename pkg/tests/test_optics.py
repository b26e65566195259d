import math

import mpmath
import numpy as np
import pytest

from quasicv import optics
from quasicv.optics import (PhysicalParams, absorption_epsilon, ac_stark_shift, ac_stark_shift_rate,
                            cavity_buildup, cavity_buildup_exact, cavity_reflection,
                            intracavity_powers, loss_numerator_denominator, loss_series,
                            michelson_amplitudes, michelson_amplitudes_solve, michelson_intensities,
                            michelson_loss_estimate, pair_coeffs, pair_hamiltonian, phase_per_atom,
                            relative_intracavity_powers, single_cavity_coeffs,
                            single_cavity_hamiltonian)

RB_GAMMA_OVER_DELTA = 6.06 / 3400


def fig2_params(ldk_over_T=0.5, **kw):
    base = dict(wavelength_ratio=1e-2, linewidth_ratio=RB_GAMMA_OVER_DELTA, T=5e-3, eps=1.2e-6,
                L=0.026, T_B=0.5, input_power=12e-9, wavelength=780e-9)
    base.update(kw)
    p = PhysicalParams(**base)
    return p.with_(dk=ldk_over_T * p.T / p.L)


def random_params(rng, eps=None):
    T = rng.uniform(1e-3, 0.2)
    return PhysicalParams(wavelength_ratio=1e-2, linewidth_ratio=1e-3, T=T,
                          eps=rng.uniform(0, T / 20) if eps is None else eps,
                          L=rng.uniform(0.01, 0.1), dk=rng.normal(0, 0.5),
                          T_B=rng.uniform(0.05, 0.95), photon_rate=1e10)


def test_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(1e-2, 1e-3, T=0.0)
    with pytest.raises(ValueError):
        PhysicalParams(1e-2, 1e-3, T_B=1.0)
    with pytest.raises(ValueError):
        PhysicalParams(1e-2, 1e-3, photon_rate=1.0, input_power=1.0)
    with pytest.warns(UserWarning):
        PhysicalParams(1e-2, 1e-3, T=1e-3, eps=2e-4)
    with pytest.raises(ValueError):
        ac_stark_shift(PhysicalParams(1e-2, 1e-3), 1e-3)


def test_phase_per_atom():
    assert phase_per_atom(PhysicalParams(1e-2, 0.0)) == 0
    mpmath.mp.dps = 30
    ref = mpmath.mpf(6) / mpmath.pi ** 2 * mpmath.mpf("1e-2") ** 2 * mpmath.mpf("1.782e-3")
    val = phase_per_atom(PhysicalParams(1e-2, 1.782e-3))
    assert val == pytest.approx(float(ref), rel=1e-14)
    assert val == pytest.approx(1.0833e-7, rel=1e-4)
    assert phase_per_atom(PhysicalParams(1e-2, -1.782e-3)) == -val


def test_reflection_lossless_and_resonant():
    alphas = np.linspace(-3, 3, 1001)
    assert np.max(np.abs(np.abs(cavity_reflection(alphas, 5e-3, 0.0)) - 1)) < 1e-14
    assert cavity_reflection(0.0, 5e-3, 0.0) == 1


def test_reflection_first_order_small_parameters():
    T = 5e-3
    for x, u in [(0.01, 0.005), (0.005, -0.01)]:
        f = complex(cavity_reflection(u * T, T, x * T))
        approx = complex(1 - 2 * x, 4 * u)
        assert abs(f - approx) < 0.02 * abs(approx)


def test_reflection_at_moderate_phase_departs_from_first_order():
    # at eps/T = 0.1, alpha/T = 0.25 the expansion parameter 4 alpha/T = 1 is not small
    f = complex(cavity_reflection(0.25 * 5e-3, 5e-3, 0.1 * 5e-3))
    assert f.real == pytest.approx(0.5079, abs=1e-3)
    assert f.imag == pytest.approx(0.6843, abs=1e-3)
    assert abs(f - (0.8 + 1.0j)) > 0.3


def test_buildup_examples():
    T, eps = 5e-3, 1.2e-6
    assert cavity_buildup(0.0, T, 0.0) == pytest.approx(800)
    assert cavity_buildup((eps + T) / 2, T, eps) == pytest.approx(cavity_buildup(0.0, T, eps) / 2)
    a = np.linspace(-T, T, 401)
    rel = np.abs(cavity_buildup_exact(a, T, eps) / cavity_buildup(a, T, eps) - 1)
    assert rel.max() < 0.01
    assert optics.cavity_response(0.0, T, eps).buildup >= 0


def test_ac_stark_shift():
    p = PhysicalParams(1e-2, 1.782e-3, wavelength=780e-9)
    assert ac_stark_shift(p, 0.0) == 0
    assert ac_stark_shift(p, 2e-9) == pytest.approx(2 * ac_stark_shift(p, 1e-9))
    assert ac_stark_shift_rate(p, 1e10) == pytest.approx(24 / math.pi ** 2 * 1e-4 * 1.782e-3 * 1e10)
    assert ac_stark_shift_rate(p, 1e10) == pytest.approx(4333.3, rel=1e-4)
    rate = 1e-9 / (optics.HBAR * p.omega0)
    assert ac_stark_shift(p, 1e-9) == pytest.approx(ac_stark_shift_rate(p, rate))


def test_single_cavity_sign_and_zero_drive():
    p = PhysicalParams(1e-2, 1.782e-3, T=5e-3, L=0.026, dk=0.02, photon_rate=1e10)
    c, cm = single_cavity_coeffs(p), single_cavity_coeffs(p.with_(dk=-0.02))
    assert np.sign(c.chi) == -1 and np.sign(cm.chi) == 1
    assert cm.chi == pytest.approx(-c.chi) and cm.omega == pytest.approx(c.omega)
    zero = single_cavity_coeffs(p.with_(photon_rate=0.0))
    assert zero.omega == 0 and zero.chi == 0


def test_single_cavity_fit_oracle():
    n = 100
    base = PhysicalParams(1e-2, 1.782e-3, T=5e-3, L=0.026, photon_rate=1e10)
    p = base.with_(dk=base.T / (4 * base.L))  # 4 L dk / T = 1
    assert phase_per_atom(p) * n <= 0.01 * p.L * abs(p.dk)
    z = np.linspace(-n / 2, n / 2, 101)
    coef = np.polyfit(z, single_cavity_hamiltonian(p, z), 4)
    fit_chi, fit_omega = coef[2], coef[3]
    ref = single_cavity_coeffs(p, n_atoms=n)
    assert ref.valid
    assert fit_omega == pytest.approx(ref.omega, rel=0.01)
    assert fit_chi == pytest.approx(ref.chi, rel=0.01)


def test_single_cavity_validity_flag():
    p = PhysicalParams(1e-2, 1.782e-3, T=5e-3, L=0.026, dk=1e-4, photon_rate=1e10)
    assert not single_cavity_coeffs(p, n_atoms=10_000).valid


def test_absorption_epsilon():
    p = PhysicalParams(780e-9 / 100e-6, RB_GAMMA_OVER_DELTA)
    assert absorption_epsilon(0, p) == 0
    eps = absorption_epsilon(1e4, p, antinodes=True)
    assert 1.0e-6 <= eps <= 1.6e-6
    assert eps == pytest.approx(1.17497e-6, rel=1e-5)
    assert eps == pytest.approx(2 * absorption_epsilon(1e4, p))


def test_michelson_closed_form_vs_solve():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        p = random_params(rng)
        phi1, phi2 = rng.normal(0, 0.01, 2)
        closed = np.array(michelson_amplitudes(p, phi1, phi2))
        worst = max(worst, np.max(np.abs(closed - michelson_amplitudes_solve(p, phi1, phi2))))
    assert worst < 1e-12


def test_michelson_energy_conservation():
    rng = np.random.default_rng(7)
    n = 10_000
    T = rng.uniform(1e-3, 0.5, n)
    TB = rng.uniform(0.01, 0.99, n)
    phi = rng.uniform(-np.pi, np.pi, (2, n))
    dev = 0.0
    for Ti, tbi, p1, p2 in zip(T, TB, *phi):
        p = PhysicalParams(1e-2, 1e-3, T=Ti, eps=0.0, T_B=tbi)
        d = michelson_amplitudes(p, p1, p2)[3]
        dev = max(dev, abs(abs(d) ** 2 - 1))
    assert dev < 1e-10


def test_michelson_intensities_consistent():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = random_params(rng)
        phi1, phi2 = rng.normal(0, 0.02, 2)
        amps = michelson_amplitudes(p, phi1, phi2)
        a2, b2, c2, d2, J = michelson_intensities(p, phi1, phi2)
        for amp, inten in zip(amps, (a2, b2, c2, d2)):
            assert abs(abs(amp) ** 2 - inten) < 1e-12
        assert J > 0
        lossless = p.with_(eps=0.0)
        assert michelson_intensities(lossless, phi1, phi2)[3] == pytest.approx(1, abs=1e-12)


def test_michelson_decoupled_arm():
    a2 = []
    for rb in (1e-4, 1e-6, 1e-8):
        p = PhysicalParams(1e-2, 1e-3, T=5e-3, eps=1e-6, T_B=1 - rb)
        a2.append(abs(michelson_amplitudes(p, 1e-4, -1e-4)[0]) ** 2)
    assert a2[0] > a2[1] > a2[2] and a2[2] < 1e-3


def test_loss_estimate():
    assert michelson_loss_estimate(1.0, 1e-5, 5e-3)[0] == 1.0
    est, exact = michelson_loss_estimate(0.5, 0.0, 5e-3)
    assert est == 1.0 and exact == pytest.approx(1.0, abs=1e-12)
    est, exact = michelson_loss_estimate(0.5, 5e-5, 5e-3)
    assert abs(est - exact) < 5e-4


def test_loss_numerator_denominator_reproduce_estimate():
    x = 1e-3
    C, J = loss_numerator_denominator(0.5, x)
    assert C / J == pytest.approx(1 - 4 * 0.5 / 1.5 * x, abs=10 * x ** 2)


def _exact_modulus_products(x, T=1e-7):
    f = abs(complex(cavity_reflection(0.0, T, x * T)))
    return {"fa": f, "fa2": f ** 2, "fa_fc": f ** 2, "fa2_fc": f ** 3, "fa2_fc2": f ** 4}


def test_loss_series_third_order():
    # the tabulated series agree with exact |f| products up to an O(x^3) remainder
    for x in (0.05, 0.025, 0.0125):
        exact = _exact_modulus_products(x)
        series = loss_series(x)
        for k, v in exact.items():
            assert abs(series[k] - v) < 8 * x ** 3


def test_loss_series_cubic_coefficient():
    # |f| = (1 - x)/(1 + x) at resonance, whose cubic coefficient is -2
    xs = np.array([0.05, 0.025, 0.0125])
    exact = np.array([_exact_modulus_products(x)["fa"] for x in xs])
    tabulated = loss_series(xs)["fa"] - exact
    corrected = tabulated - xs ** 3
    assert np.allclose(tabulated / xs ** 3, 1.0, atol=0.1)
    slope = np.polyfit(np.log(xs), np.log(np.abs(corrected)), 1)[0]
    assert slope == pytest.approx(4, abs=0.2)


def test_intracavity_baseline_and_swap():
    p = fig2_params()
    base = 4 / p.T * p.R_B / (1 + p.T_B) ** 2 * p.power
    P = intracavity_powers(p, 0.0, 0.0, form="linear")
    assert P.P1 == pytest.approx(base)
    z1, z2 = 1200.0, -500.0
    ref = relative_intracavity_powers(p, 0.0, 0.0, "linear").P2
    up = relative_intracavity_powers(p, z1, z2, "linear").P2 - ref
    down = relative_intracavity_powers(p, z2, z1, "linear").P2 - ref
    assert up == pytest.approx(-down)


def test_intracavity_full_vs_linear_on_fig2_rectangle():
    p = fig2_params(0.5)
    z = np.linspace(-3000, 3000, 61)
    z1, z2 = np.meshgrid(z, z, indexing="ij")
    full = relative_intracavity_powers(p, z1, z2, "lorentzian")
    lin = relative_intracavity_powers(p, z1, z2, "linear")
    dev1 = np.max(np.abs(lin.P1 / full.P1 - 1))
    dev2 = np.max(np.abs(lin.P2 / full.P2 - 1))
    assert dev1 < 0.02
    # P2 responds twice as strongly to phi/(L dk), so its quadratic remainder is larger
    assert dev2 == pytest.approx(0.060, abs=0.002)


def test_intracavity_parity_large_detuning():
    p = fig2_params(0.5)
    rng = np.random.default_rng(5)
    z1, z2 = rng.uniform(-3000, 3000, (2, 50))
    a = relative_intracavity_powers(p, z1, z2, "large_detuning")
    b = relative_intracavity_powers(p.with_(dk=-p.dk), -z1, -z2, "large_detuning")
    assert np.allclose(a.P1, b.P1, rtol=1e-13) and np.allclose(a.P2, b.P2, rtol=1e-13)


def test_intracavity_form_selection():
    p = fig2_params(0.5)
    with pytest.raises(ValueError):
        relative_intracavity_powers(p, 0.0, 0.0, "quadratic")
    assert not relative_intracavity_powers(p, 1e6, 0.0, "linear").valid
    assert relative_intracavity_powers(p, 10.0, 0.0, "linear").valid


def test_pair_coeffs_scaling_and_sign():
    p = fig2_params(0.5)
    c1, c2 = pair_coeffs(p), pair_coeffs(p.with_(dk=2 * p.dk))
    assert c2.chi == pytest.approx(c1.chi / 2)
    assert np.sign(c1.chi) == -np.sign(p.dk)
    assert np.sign(pair_coeffs(p.with_(dk=-p.dk)).chi) == np.sign(p.dk)
    on_res = pair_coeffs(p.with_(dk=0.0))
    assert math.isnan(on_res.chi) and not on_res.valid
    assert not pair_coeffs(p.with_(dk=1e-6 / p.L)).valid


def test_pair_coeffs_balanced_limit():
    p = fig2_params(0.5, T_B=1 - 1e-9)
    assert abs(pair_coeffs(p).omega) < 1e-6 * abs(pair_coeffs(fig2_params(0.5)).omega)


@pytest.mark.parametrize("form", ["lorentzian", "large_detuning"])
def test_pair_fit_oracle(form):
    p = fig2_params(0.5)
    zmax = 0.01 * p.L * p.dk / (2 * phase_per_atom(p))
    z = np.linspace(-zmax, zmax, 7)
    z1, z2 = (a.ravel() for a in np.meshgrid(z, z, indexing="ij"))
    h = pair_hamiltonian(p, z1, z2, form)
    design = np.column_stack([z1, z2, z1 ** 2, z2 ** 2, z1 * z2])
    w1, w2, c11, c22, c12 = np.linalg.lstsq(design, h, rcond=None)[0]
    ref = pair_coeffs(p)
    assert ref.valid
    assert w1 == pytest.approx(ref.omega, rel=0.02)
    assert w2 == pytest.approx(p.T_B * ref.omega, rel=0.02)
    for c in (c11, c22, -c12 / 2):
        assert c == pytest.approx(ref.chi, rel=0.02)
