"""Compilation of polynomial targets into primitive pulse sequences.

Targets are expression trees: ``Leaf`` (polynomials of degree <= 2 per
mode pair), ``Comm`` (the Hermitian commutator -i[A, B]), ``Scaled`` and
``Sum``. Leaves are realized from rotations, twists and the QND four-step
sequence; commutators through group-commutator gadgets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
import sympy

from ..spin import SpinOperator, SpinSystem
from .generators import (AXES, QND, CompileError, Linear, Pair, PolynomialHamiltonian, Twist,
                         materialize, rotation_to)
from .sequence import (PulseSequence, Step, conjugate, evolve_block, group_commutator_gadget)

# pair parameters used when a QND block is built from the physical primitive
DEFAULT_PAIR_OMEGA = 1.0
DEFAULT_PAIR_TB = 0.5
QND_CONFIGS = ((1, 1, 1), (-1, 1, -1), (-1, -1, 1), (1, -1, -1))


def qnd_four_step(pair: Pair, tau_total: float) -> PulseSequence:
    """Four equal segments realizing exp(+i 2 chi Z1 Z2 tau_total).

    Segment k evolves under the pair Hamiltonian with Z_j -> s_j Z_j (a pi
    rotation about X on the flipped modes) and chi -> sigma chi.
    """
    if tau_total < 0:
        raise CompileError("QND duration must be non-negative")
    m1, m2 = pair.modes
    quarter = tau_total / 4
    parts = []
    for s1, s2, sigma in QND_CONFIGS:
        gen = pair if sigma > 0 else pair.flip_detuning()
        seg = PulseSequence.single(gen, quarter)
        if s1 < 0:
            seg = conjugate(seg, Linear(m1, x=1.0), math.pi)
        if s2 < 0:
            seg = conjugate(seg, Linear(m2, x=1.0), math.pi)
        parts.append(seg)
    return PulseSequence.concat(parts, method="qnd_four_step", target=f"{-2 * pair.chi:g} Z{m1}Z{m2}",
                                effective_time=tau_total, error_order=None)


def qnd_segment_sum():
    """Symbolic sum of the four segment Hamiltonians, each for tau/4.

    Returns (sum, expected) as sympy expressions; their difference expands
    to zero.
    """
    w, tb, chi, z1, z2, tau = sympy.symbols("omega T_B chi Z1 Z2 tau", real=True)
    total = 0
    for s1, s2, sigma in QND_CONFIGS:
        a, b = s1 * z1, s2 * z2
        total += (w * (a + tb * b) + sigma * chi * (a - b) ** 2) * tau / 4
    return sympy.expand(total), -2 * chi * z1 * z2 * tau


def qnd_block(modes: tuple[int, int], strength: float, tau: float,
              omega: float = DEFAULT_PAIR_OMEGA, T_B: float = DEFAULT_PAIR_TB) -> PulseSequence:
    """exp(-i strength Z1 Z2 tau) from the pair primitive, any sign of tau."""
    c = strength * tau
    pair = Pair(modes, omega, T_B, -math.copysign(0.5, c) if c else 0.0)
    return qnd_four_step(pair, abs(c))


# -- expression trees --------------------------------------------------------

@dataclass(frozen=True)
class Leaf:
    poly: PolynomialHamiltonian


@dataclass(frozen=True)
class Comm:
    """Hermitian commutator -i[a, b]."""

    a: "Node"
    b: "Node"


@dataclass(frozen=True)
class Scaled:
    c: float
    node: "Node"


@dataclass(frozen=True)
class Sum:
    nodes: tuple


Node = Union[Leaf, Comm, Scaled, Sum]


def leaf(text: str) -> Leaf:
    return Leaf(PolynomialHamiltonian.parse(text))


def target_operator(node, system: SpinSystem) -> SpinOperator:
    """Exact matrix of an expression tree."""
    if isinstance(node, Leaf):
        return materialize(node.poly, system)
    if isinstance(node, Comm):
        a, b = target_operator(node.a, system), target_operator(node.b, system)
        return ((a @ b - b @ a) * (-1j)).check_hermitian()
    if isinstance(node, Scaled):
        return target_operator(node.node, system) * node.c
    if isinstance(node, Sum):
        ops = [target_operator(n, system) for n in node.nodes]
        out = ops[0]
        for o in ops[1:]:
            out = out + o
        return out
    raise CompileError(f"unknown node {node!r}")


def _decompose(poly: PolynomialHamiltonian):
    """Split a degree <= 2 polynomial into linear, quadratic and bilinear parts."""
    if not poly.is_formally_hermitian():
        raise CompileError(f"leaf {poly} is not formally Hermitian")
    linear: dict[int, np.ndarray] = {}
    quad: dict[int, np.ndarray] = {}
    bilin: dict[tuple[int, int], np.ndarray] = {}
    for c, w in poly.terms:
        if len(w) == 0:
            raise CompileError("identity terms only add a global phase; drop them")
        if len(w) == 1:
            (a, m), = w
            linear.setdefault(m, np.zeros(3))[AXES.index(a)] += c
        elif len(w) == 2:
            (a, m), (b, n) = w
            i, k = AXES.index(a), AXES.index(b)
            if m == n:
                # symmetric part only; the antisymmetric part cancels for Hermitian input
                mat = quad.setdefault(m, np.zeros((3, 3)))
                mat[i, k] += c / 2
                mat[k, i] += c / 2
            else:
                if m > n:
                    (m, i), (n, k) = (n, k), (m, i)
                bilin.setdefault((m, n), np.zeros((3, 3)))[i, k] += c
        else:
            raise CompileError(f"word of degree {len(w)} needs a commutator tree")
    return linear, quad, bilin


def _rotate_block(mode: int, direction, seq: PulseSequence) -> PulseSequence:
    axis, angle = rotation_to(direction)
    return conjugate(seq, Linear(mode, *axis), angle)


def _leaf_pieces(poly: PolynomialHamiltonian):
    """Exact blocks tau -> PulseSequence whose generators sum to ``poly``."""
    linear, quad, bilin = _decompose(poly)
    pieces = []
    for m, v in sorted(linear.items()):
        if np.any(v):
            pieces.append(lambda tau, m=m, v=v: evolve_block(Linear(m, *v), tau))
    for m, mat in sorted(quad.items()):
        w, vecs = np.linalg.eigh(mat)
        for lam, n in zip(w, vecs.T):
            if abs(lam) < 1e-14:
                continue
            twist = Twist(m, 1 if lam > 0 else -1, abs(lam))
            pieces.append(lambda tau, m=m, n=n, g=twist:
                          _rotate_block(m, n, evolve_block(g, tau)))
    for (m, n), mat in sorted(bilin.items()):
        u, s, vt = np.linalg.svd(mat)
        for sig, a, b in zip(s, u.T, vt):
            if sig < 1e-14:
                continue
            pieces.append(lambda tau, m=m, n=n, a=a, b=b, sig=sig:
                          _rotate_block(m, a, _rotate_block(n, b, qnd_block((m, n), sig, tau))))
    return pieces


def _symmetric_split(blocks, tau: float) -> PulseSequence:
    if len(blocks) == 1:
        return blocks[0](tau)
    half = [b(tau / 2) for b in blocks[:-1]]
    return PulseSequence.concat(half + [blocks[-1](tau)] + half[::-1])


@lru_cache(maxsize=4096)
def realize(node, tau: float, dt: float, balanced: bool = True) -> PulseSequence:
    """Sequence approximating exp(-i node tau); exact inverse for tau -> -tau.

    A commutator evolved for time tau runs k = max(1, round(|tau| / dt^2))
    gadgets of step s = sqrt(|tau| / k), so every gadget, nested or not,
    works at step size close to ``dt``.
    """
    if isinstance(node, Leaf):
        pieces = _leaf_pieces(node.poly)
        if not pieces:
            return PulseSequence()
        return _symmetric_split(pieces, tau)
    if isinstance(node, Scaled):
        return realize(node.node, node.c * tau, dt, balanced)
    if isinstance(node, Sum):
        return _symmetric_split([lambda t, n=n: realize(n, t, dt, balanced) for n in node.nodes], tau)
    if isinstance(node, Comm):
        a, b = (node.a, node.b) if tau >= 0 else (node.b, node.a)
        k = max(1, round(abs(tau) / dt ** 2))
        s = math.sqrt(abs(tau) / k)
        gadget = group_commutator_gadget(lambda t: realize(a, t, dt, balanced),
                                         lambda t: realize(b, t, dt, balanced), s, balanced)
        return gadget.repeated(k)
    raise CompileError(f"unknown node {node!r}")


def compile_target(node, t: float, dt: float, balanced: bool = True, label: str = "") -> PulseSequence:
    """n = max(1, round(|t| / dt^2)) slices of ``realize(node, t / n)``."""
    if dt <= 0:
        raise CompileError("dt must be positive")
    n = max(1, round(abs(t) / dt ** 2))
    one = realize(node, t / n, dt, balanced)
    return PulseSequence(one.repeated(n).steps,
                         {"target": label, "method": "commutator_synthesis", "simulated_time": t,
                          "dt": dt, "repetitions": n, "error_order": 4 if balanced else 3})


# -- cubic targets -----------------------------------------------------------

def x3_tree(mode: int = 1) -> Node:
    """X^3 = -(1/4) C(Z^2-Y^2, YZ+ZY) - (1/4) C(XZ+ZX, XY+YX) + X/4, C = -i[.,.]."""
    def q(s):
        return Leaf(PolynomialHamiltonian.parse(s.replace("#", str(mode))))
    p = q("Z#Z# - Y#Y#")
    qq = q("Y#Z# + Z#Y#")
    r = q("X#Z# + Z#X#")
    s = q("X#Y# + Y#X#")
    return Sum((Scaled(-0.25, Comm(p, qq)), Scaled(-0.25, Comm(r, s)), Scaled(0.25, q("X#"))))


def x3z_tree() -> Node:
    """X1^3 Z2 = X1Z2/4 - (1/4) C(Z1^2-Y1^2, C(Z1^2, X1Z2)) + (1/4) C(X1Z1+Z1X1, C(X1^2, Z1Z2))."""
    L = lambda s: Leaf(PolynomialHamiltonian.parse(s))
    inner1 = Comm(L("Z1Z1"), L("X1Z2"))
    inner2 = Comm(L("X1X1"), L("Z1Z2"))
    return Sum((Scaled(0.25, L("X1Z2")),
                Scaled(-0.25, Comm(L("Z1Z1 - Y1Y1"), inner1)),
                Scaled(0.25, Comm(L("X1Z1 + Z1X1"), inner2))))


def synth_x3(dt: float, t: float = 1e-2, mode: int = 1, balanced: bool = True) -> PulseSequence:
    return compile_target(x3_tree(mode), t, dt, balanced, label=f"X{mode}^3")


def synth_x3z(dt: float, t: float = 1e-2, balanced: bool = True) -> PulseSequence:
    return compile_target(x3z_tree(), t, dt, balanced, label="X1^3 Z2")


def target_tree(text: str | PolynomialHamiltonian) -> Node:
    """Synthesis tree for a polynomial target.

    Degree <= 2 targets are leaves. Cubic targets supported are c X_m^3 and
    c X1^3 Z2.
    """
    poly = PolynomialHamiltonian.parse(text) if isinstance(text, str) else text
    if not poly.terms:
        raise CompileError("empty target")
    if poly.degree <= 2:
        return Leaf(poly)
    if len(poly.terms) == 1:
        c, w = poly.terms[0]
        if len(w) == 3 and len(set(w)) == 1 and w[0][0] == "X":
            return Scaled(c, x3_tree(w[0][1]))
        if sorted(w) == [("X", 1)] * 3 + [("Z", 2)]:
            # Z2 commutes with X1, so any ordering of the word is the same operator
            return Scaled(c, x3z_tree())
    raise CompileError(f"no synthesis rule for {poly}; supported cubic targets are X_m^3 and X1^3 Z2")


def cubic_identity_sides(system: SpinSystem, which: str = "x3") -> tuple[SpinOperator, SpinOperator]:
    """(left, right) sides of the commutator identity for X^3 or X1^3 Z2."""
    if which == "x3":
        lhs = materialize("X^3", system)
        return lhs, target_operator(x3_tree(1), system)
    if which == "x3z":
        lhs = materialize("X1^3 Z2", system)
        return lhs, target_operator(x3z_tree(), system)
    raise CompileError(f"unknown identity {which!r}")
