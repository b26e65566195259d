"""Classical cavity optics behind the spin Hamiltonians.

All formulas are written in the dimensionless groups lambda/w, Gamma/Delta,
eps/T and L*dk. SI units appear only when converting between input power
and photon rate. Hamiltonian coefficients are H/hbar in rad/s.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy import constants

HBAR = constants.hbar
C_LIGHT = constants.c

# Resonance conventions of the Michelson setup: round-trip phases 2 L_x k0
# for arms a, b, c (cavity 1, plain mirror, cavity 2).
MICHELSON_ARM_PHASES = (0.0, math.pi, 0.0)

POWER_FORMS = ("exact", "lorentzian", "large_detuning", "linear")

# "much greater than" in validity checks
DOMINANCE = 10.0


@dataclass(frozen=True)
class PhysicalParams:
    """Optical and atomic constants of one cavity (or a symmetric pair).

    ``linewidth_ratio`` is Gamma/Delta with the sign of the detuning side.
    ``dk`` is the laser detuning from the cavity resonance in 1/m. Either
    ``photon_rate`` or ``input_power`` fixes the drive; ``wavelength`` (m)
    is needed to convert between them.
    """

    wavelength_ratio: float
    linewidth_ratio: float
    T: float = 5e-3
    eps: float = 0.0
    L: float = 0.026
    dk: float = 0.0
    T_B: float = 0.5
    photon_rate: float | None = None
    input_power: float | None = None
    wavelength: float | None = None

    def __post_init__(self):
        if not 0 < self.T < 1:
            raise ValueError(f"mirror transmissivity T must lie in (0, 1), got {self.T}")
        if not 0 <= self.eps < 1:
            raise ValueError(f"round-trip loss eps must lie in [0, 1), got {self.eps}")
        if not 0 < self.T_B < 1:
            raise ValueError(f"beam-splitter transmissivity must lie in (0, 1), got {self.T_B}")
        if self.L <= 0:
            raise ValueError("cavity length must be positive")
        if self.photon_rate is not None and self.input_power is not None:
            raise ValueError("give either photon_rate or input_power, not both")
        if self.eps >= self.T / 10:
            warnings.warn(f"eps = {self.eps:g} is not small against T = {self.T:g}; "
                          "the eps << T approximations degrade", stacklevel=3)

    @property
    def R_B(self) -> float:
        return 1.0 - self.T_B

    @property
    def omega0(self) -> float:
        if self.wavelength is None:
            raise ValueError("wavelength is required to convert between power and photon rate")
        return 2 * math.pi * C_LIGHT / self.wavelength

    @property
    def rate(self) -> float:
        """Incoming photon rate in photons/s."""
        if self.photon_rate is not None:
            return float(self.photon_rate)
        if self.input_power is not None:
            return self.input_power / (HBAR * self.omega0)
        return 0.0

    @property
    def power(self) -> float:
        """Incoming power in W."""
        if self.input_power is not None:
            return float(self.input_power)
        return self.rate * HBAR * self.omega0

    @property
    def phase_per_atom(self) -> float:
        return phase_per_atom(self)

    def with_(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)


class HamiltonianCoeffs(NamedTuple):
    omega: float
    chi: float
    valid: bool
    condition: str


class CavityResponse(NamedTuple):
    reflection: complex
    buildup: float


class IntracavityPowers(NamedTuple):
    P1: np.ndarray
    P2: np.ndarray
    valid: bool


def phase_per_atom(params: PhysicalParams) -> float:
    """Round-trip optical phase shift produced by one atom."""
    return 6 / math.pi ** 2 * params.wavelength_ratio ** 2 * params.linewidth_ratio


def cavity_reflection(alpha, T: float, eps: float):
    """a_out / a_in of a one-sided cavity with round-trip phase deviation alpha."""
    r = math.sqrt(1 - T)
    s = math.sqrt(1 - eps)
    e = np.exp(1j * np.asarray(alpha, dtype=float))
    return (s * e - r) / (1 - s * r * e)


def cavity_buildup(alpha, T: float, eps: float):
    """Lorentzian E_cav^2 / E_in^2, valid for small alpha and eps, T << 1."""
    alpha = np.asarray(alpha, dtype=float)
    return 4 / (T * (1 + eps / T) ** 2) / (1 + (2 * alpha / (eps + T)) ** 2)


def cavity_buildup_exact(alpha, T: float, eps: float):
    """|c / a_in|^2 from the unapproximated geometric sum."""
    r = math.sqrt(1 - T)
    s = math.sqrt(1 - eps)
    e = np.exp(1j * np.asarray(alpha, dtype=float))
    return np.abs(math.sqrt(T) / (1 - s * r * e)) ** 2


def cavity_response(alpha: float, T: float, eps: float) -> CavityResponse:
    return CavityResponse(complex(cavity_reflection(alpha, T, eps)),
                          float(cavity_buildup(alpha, T, eps)))


def ac_stark_shift(params: PhysicalParams, power) -> np.ndarray:
    """Splitting omega_ac (rad/s) of g1, g2 for circulating power P in W."""
    return ac_stark_shift_rate(params, np.asarray(power, dtype=float) / (HBAR * params.omega0))


def ac_stark_shift_rate(params: PhysicalParams, photon_rate) -> np.ndarray:
    """omega_ac (rad/s) with the power given as a photon rate P / (hbar omega0)."""
    return (24 / math.pi ** 2 * params.wavelength_ratio ** 2 * params.linewidth_ratio
            * np.asarray(photon_rate, dtype=float))


def single_cavity_hamiltonian(params: PhysicalParams, z):
    """H(Z)/hbar in rad/s of one cavity before linearization in Z."""
    z = np.asarray(z, dtype=float)
    T = params.T
    alpha = 2 * (params.L * params.dk + params.phase_per_atom * z)
    return (24 / (math.pi ** 2 * T) / (1 + (2 * alpha / T) ** 2)
            * params.wavelength_ratio ** 2 * params.linewidth_ratio * z * params.rate)


def single_cavity_coeffs(params: PhysicalParams, n_atoms: int | None = None) -> HamiltonianCoeffs:
    """omega and chi of H = omega Z + chi Z^2 for one cavity.

    With ``n_atoms`` the linearization condition |dk| >> dphi N / (2L) is
    checked (factor ``DOMINANCE``); without it the flag is left True.
    """
    T = params.T
    u = 4 * params.L * params.dk / T
    lw2 = params.wavelength_ratio ** 2
    g = params.linewidth_ratio
    omega = 24 / (math.pi ** 2 * T) / (1 + u ** 2) * lw2 * g * params.rate
    chi = (-(2 ** 7 * 3 ** 2) / math.pi ** 4 / T ** 2 * u / (1 + u ** 2) ** 2
           * lw2 ** 2 * g ** 2 * params.rate)
    condition = "|dk| >> dphi N / (2L)"
    valid = True
    if n_atoms is not None:
        bound = abs(params.phase_per_atom) * n_atoms / (2 * params.L)
        valid = abs(params.dk) >= DOMINANCE * bound
    return HamiltonianCoeffs(omega, chi, valid, condition)


def absorption_epsilon(n_atoms: float, params: PhysicalParams, antinodes: bool = False) -> float:
    """Round-trip loss from off-resonant absorption by N atoms (Gamma << Delta)."""
    eps = 3 / math.pi ** 2 * n_atoms * params.wavelength_ratio ** 2 * params.linewidth_ratio ** 2
    return 2 * eps if antinodes else eps


def _michelson_inputs(params: PhysicalParams, phi1, phi2, arm_phases):
    alpha1 = np.asarray(phi1, dtype=float) + 2 * params.L * params.dk
    alpha2 = np.asarray(phi2, dtype=float) + 2 * params.L * params.dk
    fa = cavity_reflection(alpha1, params.T, params.eps)
    fc = cavity_reflection(alpha2, params.T, params.eps)
    ea, eb, ec = (np.exp(1j * p) for p in arm_phases)
    return fa, fc, ea, eb, ec


def michelson_amplitudes(params: PhysicalParams, phi1, phi2,
                         arm_phases=MICHELSON_ARM_PHASES):
    """Closed-form beam-splitter output amplitudes (a, b, c, d), unit input.

    a feeds cavity 1, b the plain mirror, c cavity 2, d leaves the
    interferometer. ``arm_phases`` are the round-trip phases 2 L_x k.
    """
    fa, fc, ea, eb, ec = _michelson_inputs(params, phi1, phi2, arm_phases)
    tb = math.sqrt(params.T_B)
    rb = math.sqrt(params.R_B)
    den = 1 + rb ** 2 * ec * eb * fc - tb ** 2 * ea * ec * fa * fc
    a = 1j * rb * (1 + ec * eb * fc) / den
    b = tb * (1 - ea * ec * fa * fc) / den
    c = 1j * rb * tb * (eb + ea * fa) / den
    d = (tb ** 2 * eb - rb ** 2 * ea * fa - ea * eb * ec * fa * fc) / den
    return a, b, c, d


def michelson_amplitudes_solve(params: PhysicalParams, phi1: float, phi2: float,
                               arm_phases=MICHELSON_ARM_PHASES) -> np.ndarray:
    """Same amplitudes from a direct 4x4 linear solve of the port equations."""
    fa, fc, ea, eb, ec = _michelson_inputs(params, phi1, phi2, arm_phases)
    tb = math.sqrt(params.T_B)
    rb = 1j * math.sqrt(params.R_B)
    # unknowns (a, b, c, d)
    m = np.array([
        [1, 0, -tb * ec * fc, 0],
        [0, 1, -rb * ec * fc, 0],
        [-tb * ea * fa, -rb * eb, 1, 0],
        [-rb * ea * fa, -tb * eb, 0, 1],
    ], dtype=complex)
    rhs = np.array([rb, tb, 0, 0], dtype=complex)
    return np.linalg.solve(m, rhs)


def michelson_intensities(params: PhysicalParams, phi1, phi2,
                          arm_phases=MICHELSON_ARM_PHASES):
    """(|a|^2, |b|^2, |c|^2, |d|^2, J) written through |f| and the phases delta."""
    fa = cavity_reflection(np.asarray(phi1, dtype=float) + 2 * params.L * params.dk,
                           params.T, params.eps)
    fc = cavity_reflection(np.asarray(phi2, dtype=float) + 2 * params.L * params.dk,
                           params.T, params.eps)
    th_a, th_b, th_c = arm_phases
    A, C = np.abs(fa), np.abs(fc)
    da = np.angle(fa) + th_a - th_b
    dc = np.angle(fc) + th_c + th_b
    TB, RB = params.T_B, params.R_B
    J = (1 + RB ** 2 * C ** 2 + TB ** 2 * A ** 2 * C ** 2 + 2 * RB * C * np.cos(dc)
         - 2 * TB * A * C * np.cos(da + dc) - 2 * RB * TB * A * C ** 2 * np.cos(da))
    a2 = RB * (1 + C ** 2 + 2 * C * np.cos(dc)) / J
    b2 = TB * (1 + A ** 2 * C ** 2 - 2 * A * C * np.cos(da + dc)) / J
    c2 = RB * TB * (1 + A ** 2 + 2 * A * np.cos(da)) / J
    d2 = (TB ** 2 + RB ** 2 * A ** 2 + A ** 2 * C ** 2 - 2 * TB * A * C * np.cos(da + dc)
          - 2 * RB * TB * A * np.cos(da) + 2 * RB * A ** 2 * C * np.cos(dc)) / J
    return a2, b2, c2, d2, J


def michelson_loss_estimate(T_B: float, eps: float, T: float) -> tuple[float, float]:
    """Linear loss estimate of |d|^2 and the exact value at the resonance point."""
    estimate = 1 - 4 * (1 - T_B) / (1 + T_B) * (eps / T)
    if T_B >= 1 or eps == 0:
        # no loss path; the resonance-point formula is 0/0 at eps = 0
        return estimate, 1.0
    # resonance point: alpha = 0 in both cavities, arm conventions as in the setup
    p = PhysicalParams(wavelength_ratio=0.0, linewidth_ratio=0.0, T=T, eps=eps, T_B=T_B)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        exact = float(michelson_intensities(p, 0.0, 0.0)[3])
    return estimate, exact


def loss_series(x, gamma_a=0.0, gamma_c=0.0) -> dict[str, np.ndarray]:
    """Power series of |f| products in x = eps/T and small reflection phases.

    Coefficients are the ones used to derive the linear loss estimate.
    """
    x = np.asarray(x, dtype=float)
    ga2, gc2 = np.asarray(gamma_a) ** 2, np.asarray(gamma_c) ** 2
    return {
        "fa": 1 - 2 * x + x / 2 * ga2 + 2 * x ** 2 - x ** 3,
        "fc": 1 - 2 * x + x / 2 * gc2 + 2 * x ** 2 - x ** 3,
        "fa2": 1 - 4 * x + x * ga2 + 8 * x ** 2 - 10 * x ** 3,
        "fc2": 1 - 4 * x + x * gc2 + 8 * x ** 2 - 10 * x ** 3,
        "fa_fc": 1 - 4 * x + x / 2 * (ga2 + gc2) + 8 * x ** 2 - 10 * x ** 3,
        "fa2_fc": 1 - 6 * x + x / 2 * (2 * ga2 + gc2) + 18 * x ** 2 - 35 * x ** 3,
        "fa_fc2": 1 - 6 * x + x / 2 * (ga2 + 2 * gc2) + 18 * x ** 2 - 35 * x ** 3,
        "fa2_fc2": 1 - 8 * x + x * (ga2 + gc2) + 32 * x ** 2 - 84 * x ** 3,
    }


def loss_numerator_denominator(T_B: float, x) -> tuple[np.ndarray, np.ndarray]:
    """Expansions of C and J (|d|^2 = C / J) to third order in x = eps/T."""
    x = np.asarray(x, dtype=float)
    C = 4 * (1 + T_B) ** 2 * x ** 2 - 8 * (3 + 4 * T_B + T_B ** 2) * x ** 3
    J = 4 * (1 + T_B) ** 2 * x ** 2 - 8 * (1 + 4 * T_B + 3 * T_B ** 2) * x ** 3
    return C, J


def _phases(params: PhysicalParams, z1, z2):
    dphi = params.phase_per_atom
    return 2 * dphi * np.asarray(z1, dtype=float), 2 * dphi * np.asarray(z2, dtype=float)


def relative_intracavity_powers(params: PhysicalParams, z1, z2,
                                form: str = "lorentzian") -> IntracavityPowers:
    """Circulating powers P1/P0, P2/P0 of the two Michelson cavities.

    ``form`` selects the fidelity tier: ``exact`` (full interferometer plus
    exact cavity buildup), ``lorentzian`` (small-phase cavity response),
    ``large_detuning`` (|dk| >> eps/2L) or ``linear`` (first order in
    phi/(L dk)). ``valid`` reports the tier's own validity condition.
    """
    if form not in POWER_FORMS:
        raise ValueError(f"unknown power form {form!r}; choose from {POWER_FORMS}")
    phi1, phi2 = _phases(params, z1, z2)
    T, eps, L, dk, TB, RB = params.T, params.eps, params.L, params.dk, params.T_B, params.R_B
    ldk2 = 2 * L * dk
    if form == "exact":
        a2, _, c2, _, _ = michelson_intensities(params, phi1, phi2)
        p1 = a2 * cavity_buildup_exact(phi1 + ldk2, T, eps)
        p2 = c2 * cavity_buildup_exact(phi2 + ldk2, T, eps)
        return IntracavityPowers(p1, p2, True)
    common = phi2 + TB * phi1 + (1 + TB) * ldk2
    if form == "lorentzian":
        den = eps ** 2 + 4 / (1 + TB) ** 2 * common ** 2
        p1 = 4 / T * RB / (1 + TB) ** 2 * (eps ** 2 + 4 * (phi2 + ldk2) ** 2) / den
        p2 = 4 / T * RB * TB / (1 + TB) ** 2 * (eps ** 2 + 4 * (phi1 + ldk2) ** 2) / den
        return IntracavityPowers(p1, p2, True)
    valid_detuning = abs(dk) >= DOMINANCE * eps / (2 * L)
    if form == "large_detuning":
        p1 = 4 * RB / T * (phi2 + ldk2) ** 2 / common ** 2
        p2 = 4 * RB * TB / T * (phi1 + ldk2) ** 2 / common ** 2
        return IntracavityPowers(p1, p2, valid_detuning)
    base = 4 / T * RB / (1 + TB) ** 2
    lin = (1 + TB) * L * dk
    p1 = base * (1 + TB * (phi2 - phi1) / lin)
    p2 = base * TB * (1 + (phi1 - phi2) / lin)
    small = max(np.max(np.abs(phi1)), np.max(np.abs(phi2))) <= abs(L * dk) / DOMINANCE
    return IntracavityPowers(p1, p2, bool(valid_detuning and small))


def intracavity_powers(params: PhysicalParams, z1, z2, form: str = "lorentzian") -> IntracavityPowers:
    """Circulating powers in W."""
    rel = relative_intracavity_powers(params, z1, z2, form)
    p0 = params.power
    return IntracavityPowers(rel.P1 * p0, rel.P2 * p0, rel.valid)


def pair_hamiltonian(params: PhysicalParams, z1, z2, form: str = "lorentzian"):
    """H(Z1, Z2)/hbar in rad/s: 2 (omega_ac(P1) Z1 + omega_ac(P2) Z2)."""
    rel = relative_intracavity_powers(params, z1, z2, form)
    w1 = ac_stark_shift_rate(params, rel.P1 * params.rate)
    w2 = ac_stark_shift_rate(params, rel.P2 * params.rate)
    return 2 * (w1 * np.asarray(z1, dtype=float) + w2 * np.asarray(z2, dtype=float))


def pair_coeffs(params: PhysicalParams) -> HamiltonianCoeffs:
    """omega and chi of H = omega (Z1 + T_B Z2) + chi (Z1 - Z2)^2."""
    TB, RB, T = params.T_B, params.R_B, params.T
    lw2 = params.wavelength_ratio ** 2
    g = params.linewidth_ratio
    omega = 2 ** 6 * 3 / math.pi ** 2 * RB / (1 + TB) ** 2 / T * lw2 * g * params.rate
    if params.dk == 0:
        # linearization breaks down on resonance
        chi = math.nan
    else:
        chi = (-(2 ** 8 * 3 ** 2) / math.pi ** 4 * RB * TB / (1 + TB) ** 3
               / (T * params.L * params.dk) * lw2 ** 2 * g ** 2 * params.rate)
    valid = abs(params.dk) >= DOMINANCE * params.eps / (2 * params.L) and params.dk != 0
    return HamiltonianCoeffs(omega, chi, valid, "|dk| >> eps / (2L)")
