import math
import warnings

import numpy as np
import pytest
import scipy.linalg as sla
import sympy

from quasicv.compiler import (QND, CompileError, Linear, Pair, PolynomialHamiltonian, PulseSequence,
                              Step, Twist, Word, conjugate_by_rotation, cubic_identity_sides,
                              effective_generator, fidelity, group_commutator_gadget, materialize,
                              max_norm, qnd_block, qnd_four_step, qnd_segment_sum, rotation_to,
                              sequence_to_unitary, symmetrize, synth_x3, synth_x3z, target_operator,
                              trotter_compose, x3_tree, x3z_tree)
from quasicv.compiler.sequence import MAX_DIM
from quasicv.spin import SpinSystem, build_collective_ops, mode_ops, random_state


def dense(op):
    return op.dense()


def exact(h, t):
    return sla.expm(-1j * dense(h) * t)


def heff_error(seq, system, target, t):
    return max_norm(effective_generator(sequence_to_unitary(seq, system), t, system).dense() - dense(target))


# -- generators and polynomials ----------------------------------------------

def test_materialize_basic_words():
    s = SpinSystem.single(4)
    x, y, z = build_collective_ops(s)
    assert max_norm(materialize("YZ+ZY", s).dense() - dense(y @ z + z @ y)) == 0
    assert max_norm(materialize("X^3", s).dense() - dense(x @ x @ x)) < 1e-13
    assert max_norm(materialize("X³", s).dense() - dense(x @ x @ x)) < 1e-13
    p = SpinSystem.pair(2, 3)
    x1, _, z1 = mode_ops(p, 1)
    _, _, z2 = mode_ops(p, 2)
    got = materialize("0.25 X1 Z2 - Z1^2", p).dense()
    assert max_norm(got - dense(x1 @ z2 * 0.25 - z1 @ z1)) < 1e-14


def test_materialize_generators():
    p = SpinSystem.pair(3, 3)
    _, _, z1 = mode_ops(p, 1)
    _, _, z2 = mode_ops(p, 2)
    pair = materialize(Pair((1, 2), 0.7, 0.5, 0.3), p).dense()
    d = z1 - z2
    assert max_norm(pair - dense((z1 + z2 * 0.5) * 0.7 + d @ d * 0.3)) < 1e-14
    assert max_norm(materialize(QND((1, 2), 2.0), p).dense() - dense(z1 @ z2 * 2.0)) < 1e-14
    assert max_norm(materialize(Twist(2, -1, 0.5), p).dense() + dense(z2 @ z2 * 0.5)) < 1e-14


def test_mode_out_of_range():
    with pytest.raises(CompileError):
        materialize("X3", SpinSystem.pair(2, 2))


def test_parser_merges_terms():
    poly = PolynomialHamiltonian.parse("X Y + 2 XY - YX")
    assert sorted((c, w) for c, w in poly.terms) == [(-1.0, (("Y", 1), ("X", 1))), (3.0, (("X", 1), ("Y", 1)))]
    assert PolynomialHamiltonian.parse("X^2").degree == 2
    assert PolynomialHamiltonian.parse("1e-3 Z").terms[0][0] == pytest.approx(1e-3)
    with pytest.raises(CompileError):
        PolynomialHamiltonian.parse("X + Q")


def test_formal_hermiticity_and_symmetrize():
    assert PolynomialHamiltonian.parse("YZ+ZY").is_formally_hermitian()
    assert not PolynomialHamiltonian.parse("YZ").is_formally_hermitian()
    assert PolynomialHamiltonian.parse("X1 Z2").is_formally_hermitian()
    s = SpinSystem.single(5)
    sym = symmetrize("YZ")
    assert sym.is_formally_hermitian()
    h = materialize(sym, s).dense()
    assert max_norm(h - h.conj().T) < 1e-14
    assert max_norm(h - dense(materialize("0.5 YZ + 0.5 ZY", s))) < 1e-14


def test_polynomial_json_round_trip():
    poly = PolynomialHamiltonian.parse("0.25 X1 Z2 - Z1^2 + Y2")
    assert PolynomialHamiltonian.from_dict(poly.to_dict()) == poly


@pytest.mark.parametrize("n", [(0, 0, 1), (0, 0, -1), (1, 0, 0), (0.3, -0.5, 0.8)])
def test_rotation_to(n):
    s = SpinSystem.single(3)
    x, y, z = build_collective_ops(s)
    axis, angle = rotation_to(n)
    g = dense(x * axis[0] + y * axis[1] + z * axis[2])
    u = sla.expm(1j * angle * g)
    nn = np.asarray(n) / np.linalg.norm(n)
    assert max_norm(u @ dense(z) @ u.conj().T - dense(x * nn[0] + y * nn[1] + z * nn[2])) < 1e-12


# -- sequences ----------------------------------------------------------------

def test_conjugation_zero_angle_is_identity_map():
    seq = conjugate_by_rotation(Twist(1), Linear(1, x=1.0), 0.0)
    assert seq == PulseSequence.single(Twist(1), 1.0)


@pytest.mark.parametrize("angle,target", [(math.pi / 2, "YY"),
                                           (math.pi / 4, "0.5 ZZ + 0.5 YY + 0.5 YZ + 0.5 ZY")])
def test_conjugated_twist(angle, target):
    # e^{i a X} Z e^{-i a X} = Z cos a + Y sin a; the short duration keeps eigenphases below pi
    s = SpinSystem.single(10)
    t = 0.01
    seq = conjugate_by_rotation(Twist(1), Linear(1, x=1.0), angle, duration=t)
    got = effective_generator(sequence_to_unitary(seq, s), t, s).dense()
    assert max_norm(got - materialize(target, s).dense()) < 1e-10


def test_twist_differences_from_conjugation():
    # X^2 - Y^2 and XY + YX built as differences of rotated twists
    s = SpinSystem.single(10)
    tau = 0.01
    zx = conjugate_by_rotation(Twist(1), Linear(1, y=1.0), math.pi / 2, tau)   # X^2
    zy = conjugate_by_rotation(Twist(1, -1), Linear(1, x=1.0), math.pi / 2, tau)  # -Y^2
    got = effective_generator(sequence_to_unitary(zx + zy, s), tau, s).dense()
    target = materialize("XX - YY", s).dense()
    # X^2 and Y^2 do not commute, so a single concatenation carries O(tau) error
    assert max_norm(got - target) < 3 * tau * max_norm(target) ** 2 / 10
    diag = conjugate_by_rotation(Twist(1), Linear(1, z=1.0), math.pi / 4,
                                 tau)  # Z^2 invariant under Z rotations
    assert max_norm(effective_generator(sequence_to_unitary(diag, s), tau, s).dense()
                    - materialize("ZZ", s).dense()) < 1e-10


def test_gadget_identical_generators_is_identity():
    s = SpinSystem.single(6)
    seq = group_commutator_gadget(Linear(1, x=1.0), Linear(1, x=1.0), 0.1)
    assert max_norm(sequence_to_unitary(seq, s) - np.eye(s.dim)) < 1e-12


def test_gadget_x_y_gives_z():
    s = SpinSystem.single(6)
    z = materialize("Z", s)
    dt = 1e-2
    plain = heff_error(group_commutator_gadget(Linear(1, x=1.0), Linear(1, y=1.0), dt), s, z, dt ** 2)
    balanced = heff_error(group_commutator_gadget(Linear(1, x=1.0), Linear(1, y=1.0), dt, balanced=True),
                          s, z, dt ** 2)
    # the plain gadget carries an O(dt) generator error, the balanced one O(dt^2)
    assert plain == pytest.approx(0.0122, rel=0.05)
    assert balanced < 1e-3


def test_gadget_unitary_error_scales_cubically():
    s = SpinSystem.single(6)
    z = materialize("Z", s)
    dts = np.geomspace(1e-3, 1e-1, 7)
    errs = [max_norm(sequence_to_unitary(group_commutator_gadget(Linear(1, x=1.0), Linear(1, y=1.0), d), s)
                     - exact(z, d ** 2)) for d in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 3) < 0.2


def test_trotter_commuting_terms_exact():
    s = SpinSystem.single(5)
    seqs = [PulseSequence.single(Linear(1, z=1.0), 0.7), PulseSequence.single(Twist(1), 0.7)]
    u = sequence_to_unitary(trotter_compose(seqs, 3), s)
    assert max_norm(u - exact(materialize("Z + ZZ", s), 0.7)) < 1e-12


def test_trotter_first_order_single_slice_is_concatenation():
    seqs = [PulseSequence.single(Linear(1, x=1.0), 0.4), PulseSequence.single(Linear(1, z=1.0), 0.4)]
    assert trotter_compose(seqs, 1, order=1) == PulseSequence.concat(seqs)
    with pytest.raises(CompileError):
        trotter_compose(seqs, 0)
    with pytest.raises(CompileError):
        trotter_compose(seqs, 2, order=3)


def test_trotter_second_order_convergence():
    s = SpinSystem.single(4)
    seqs = [PulseSequence.single(Linear(1, x=1.0), 1.0), PulseSequence.single(Linear(1, z=1.0), 1.0)]
    target = exact(materialize("X + Z", s), 1.0)
    ns = np.array([4, 8, 16, 32, 64])
    errs = [max_norm(sequence_to_unitary(trotter_compose(seqs, n), s) - target) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert abs(slope + 2) < 0.2


# -- QND ------------------------------------------------------------------------

def test_qnd_symbolic_sum():
    total, expected = qnd_segment_sum()
    assert sympy.simplify(total - expected) == 0


def test_qnd_four_step_fidelity():
    s = SpinSystem.pair(10, 10)
    chi, tau = 0.5, 2e-3
    seq = qnd_four_step(Pair((1, 2), 1.3, 0.5, chi), tau)
    target = exact(materialize(f"{-2 * chi} Z1 Z2", s), tau)
    rng = np.random.default_rng(7)
    states = [random_state(s, rng).vector for _ in range(10)]
    assert 1 - fidelity(sequence_to_unitary(seq, s), target, states) < 1e-10
    assert max_norm(sequence_to_unitary(seq, s) - target) < 1e-12


def test_qnd_zero_chi_is_identity():
    s = SpinSystem.pair(3, 3)
    u = sequence_to_unitary(qnd_four_step(Pair((1, 2), 1.0, 0.5, 0.0), 0.8), s)
    assert max_norm(u - np.eye(s.dim)) < 1e-12


@pytest.mark.parametrize("strength,tau", [(1.0, 0.3), (-2.0, 0.1), (0.5, -0.4)])
def test_qnd_block_sign(strength, tau):
    s = SpinSystem.pair(2, 4)
    u = sequence_to_unitary(qnd_block((1, 2), strength, tau), s)
    assert max_norm(u - exact(materialize(QND((1, 2), strength), s), tau)) < 1e-12


# -- cubic identities and synthesis -----------------------------------------------

@pytest.mark.parametrize("n", [1, 6, 10, 20, 40])
def test_x3_identity(n):
    lhs, rhs = cubic_identity_sides(SpinSystem.single(n), "x3")
    assert max_norm(lhs.dense() - rhs.dense()) < 1e-10


@pytest.mark.parametrize("n1,n2", [(1, 1), (2, 3), (6, 6), (10, 4)])
def test_x3z_identity(n1, n2):
    lhs, rhs = cubic_identity_sides(SpinSystem.pair(n1, n2), "x3z")
    assert max_norm(lhs.dense() - rhs.dense()) < 1e-10


def test_identity_rejects_unknown():
    with pytest.raises(CompileError):
        cubic_identity_sides(SpinSystem.single(2), "x5")


def test_degree_three_leaf_rejected():
    from quasicv.compiler import compile_target, leaf
    with pytest.raises(CompileError):
        compile_target(leaf("XXX"), 0.1, 0.1)


def _infidelity(seq, target, system, t, n_states=6):
    u = sequence_to_unitary(seq, system)
    v = exact(target, t)
    rng = np.random.default_rng(11)
    states = [random_state(system, rng).vector for _ in range(n_states)]
    return 1 - fidelity(u, v, states)


def test_compiled_x3_converges():
    s = SpinSystem.single(8)
    t = 1e-2
    target = materialize("X^3", s)
    errs = [_infidelity(synth_x3(dt, t), target, s, t) for dt in (0.1, 0.03, 0.01)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-6
    slope = np.polyfit(np.log([0.1, 0.03, 0.01]), np.log(errs), 1)[0]
    assert slope > 3  # infidelity ~ (dt^2)^2


def test_compiled_x3z_converges():
    s = SpinSystem.pair(3, 3)
    t = 1e-2
    target = materialize("X1^3 Z2", s)
    errs = [_infidelity(synth_x3z(dt, t), target, s, t) for dt in (0.1, 0.03, 0.01)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-6


def test_compiled_sequence_metadata():
    seq = synth_x3(0.1)
    assert seq.metadata["method"] == "commutator_synthesis"
    assert seq.metadata["target"] == "X1^3"
    assert len(seq) > 100


# -- unitaries and verification ---------------------------------------------------

def test_empty_and_single_step_unitary():
    s = SpinSystem.single(5)
    assert np.array_equal(sequence_to_unitary(PulseSequence(), s), np.eye(s.dim))
    u = sequence_to_unitary(PulseSequence.single(Linear(1, y=0.4), 1.3), s)
    assert max_norm(u - exact(materialize("0.4 Y", s), 1.3)) < 1e-13


def test_inverse_gives_identity():
    s = SpinSystem.pair(12, 2)
    seq = PulseSequence((Step(Linear(1, x=0.3, z=0.2), 0.5), Step(Pair((1, 2), 0.7, 0.5, 0.4), 0.3),
                         Step(Twist(2, -1, 0.8), 0.2), Step(QND((1, 2), 0.5), 0.9),
                         Step(Word(PolynomialHamiltonian.parse("X1 Y2 + Y2 X1")), 0.1)))
    seq = seq + seq.repeated(3)
    u = sequence_to_unitary(seq + seq.inverse(), s)
    assert max_norm(u - np.eye(s.dim)) < 1e-12


def test_pair_negation_uses_pi_rotations():
    inv = PulseSequence.single(Pair((1, 2), 1.0, 0.5, 0.2), 0.3).inverse()
    gens = [st.generator for st in inv.flat_steps()]
    assert [type(g).__name__ for g in gens] == ["Linear", "Linear", "Pair", "Linear", "Linear"]
    assert gens[2].chi == -0.2


def test_dimension_guard():
    with pytest.raises(CompileError, match="exceeds"):
        sequence_to_unitary(PulseSequence(), SpinSystem.pair(200, 200))
    assert SpinSystem.pair(200, 200).dim > MAX_DIM


def test_negative_duration_rejected():
    with pytest.raises(CompileError):
        Step(Linear(1, x=1.0), -0.1)
    with pytest.raises(CompileError):
        Step(Linear(1, x=1.0), float("nan"))


def test_effective_generator_examples():
    s = SpinSystem.single(4)
    z = materialize("Z", s)
    got = effective_generator(exact(z, 0.5), 0.5, s)
    assert max_norm(got.dense() - z.dense()) < 1e-12
    with pytest.raises(CompileError):
        effective_generator(np.eye(5), 0.0)


def test_effective_generator_branch_warning():
    s = SpinSystem.single(2)
    z = materialize("Z", s)
    with pytest.warns(RuntimeWarning, match="branch"):
        effective_generator(exact(z, math.pi), math.pi, s)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        effective_generator(exact(z, 1.0), 1.0, s)


def test_sign_flip_closure():
    # every generator can be negated through its own knob
    for g in (Linear(1, 1.0, 2.0, 3.0), Twist(1, 1, 0.5), QND((1, 2), 0.3),
              Word(PolynomialHamiltonian.parse("X1 Z2"))):
        assert g.negated().negated() == g
    s = SpinSystem.pair(2, 2)
    pair = Pair((1, 2), 0.4, 0.5, 0.3)
    neg = PulseSequence.single(pair, 0.2).inverse()
    assert max_norm(sequence_to_unitary(neg, s) - exact(materialize(pair, s), -0.2)) < 1e-12


def test_sequence_json_round_trip(tmp_path):
    seq = synth_x3z(0.3, t=0.05)
    path = tmp_path / "seq.json"
    seq.dump(path)
    back = PulseSequence.load(path)
    assert back == seq
    assert back.metadata == seq.metadata
    s = SpinSystem.pair(2, 2)
    assert max_norm(sequence_to_unitary(back, s) - sequence_to_unitary(seq, s)) == 0


def test_malformed_sequence_json():
    with pytest.raises(CompileError):
        PulseSequence.from_dict({"steps": [{"generator": {"kind": "BOGUS"}, "duration": 1}]})
    with pytest.raises(CompileError):
        PulseSequence.from_dict({"steps": [{"duration": 1}]})


def test_target_operator_tree():
    s = SpinSystem.single(6)
    assert max_norm(target_operator(x3_tree(), s).dense() - materialize("X^3", s).dense()) < 1e-12
    p = SpinSystem.pair(2, 2)
    assert max_norm(target_operator(x3z_tree(), p).dense() - materialize("X1^3 Z2", p).dense()) < 1e-12
