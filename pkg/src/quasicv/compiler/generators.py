"""Primitive generators and polynomial Hamiltonians over per-mode X, Y, Z."""

from __future__ import annotations

import itertools
import math
import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..spin import SpinError, SpinOperator, SpinSystem, identity, mode_ops

AXES = "XYZ"


class CompileError(ValueError):
    """A generator or expression cannot be built or realized."""


def _check_mode(system: SpinSystem, mode: int):
    if not 1 <= mode <= system.n_modes:
        raise CompileError(f"mode {mode} is not part of a {system.n_modes}-mode system")


@dataclass(frozen=True)
class Linear:
    """H = x X + y Y + z Z on one mode (microwave drive or bias field).

    The sign knob is the microwave phase: shifting it by pi negates x and y;
    the z part flips with the bias detuning.
    """

    mode: int
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def negated(self) -> "Linear":
        return Linear(self.mode, -self.x, -self.y, -self.z)

    @property
    def modes(self) -> tuple[int, ...]:
        return (self.mode,)


@dataclass(frozen=True)
class Twist:
    """H = sign * strength * Z^2 from a single detuned cavity; sign follows the detuning."""

    mode: int
    sign: int = 1
    strength: float = 1.0

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise CompileError("twist sign must be +1 or -1")

    def negated(self) -> "Twist":
        return Twist(self.mode, -self.sign, self.strength)

    @property
    def modes(self) -> tuple[int, ...]:
        return (self.mode,)


@dataclass(frozen=True)
class Pair:
    """H = omega (Z1 + T_B Z2) + chi (Z1 - Z2)^2 of a Michelson cavity pair.

    Only chi can be flipped (cavity detuning sign); a full negation needs
    pi rotations on both modes, see ``PulseSequence.inverse``.
    """

    modes: tuple[int, int]
    omega: float
    T_B: float
    chi: float

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        if len(self.modes) != 2 or self.modes[0] == self.modes[1]:
            raise CompileError("a pair needs two distinct modes")

    def flip_detuning(self) -> "Pair":
        return Pair(self.modes, self.omega, self.T_B, -self.chi)


@dataclass(frozen=True)
class QND:
    """H = strength * Z1 Z2; realized physically by the four-step pair sequence."""

    modes: tuple[int, int]
    strength: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        if len(self.modes) != 2 or self.modes[0] == self.modes[1]:
            raise CompileError("QND needs two distinct modes")

    def negated(self) -> "QND":
        return QND(self.modes, -self.strength)


@dataclass(frozen=True)
class Word:
    """Explicit polynomial generator, kept symbolic until materialized."""

    poly: "PolynomialHamiltonian"

    def negated(self) -> "Word":
        return Word(self.poly.scaled(-1.0))

    @property
    def modes(self) -> tuple[int, ...]:
        return self.poly.modes


Generator = Union[Linear, Twist, Pair, QND, Word]
Letter = tuple[str, int]


_FACTOR = re.compile(r"([XYZI])(\d*)(?:\^(\d+)|([²³]))?")
_TERM_SPLIT = re.compile(r"(?<![eE\^])([+-])")
_SUPERSCRIPT = {"²": 2, "³": 3}


@dataclass(frozen=True)
class PolynomialHamiltonian:
    """Real linear combination of ordered operator words.

    A word is a tuple of (axis, mode) letters, e.g. (("Y", 1), ("Z", 1)).
    The empty word is the identity.
    """

    terms: tuple[tuple[float, tuple[Letter, ...]], ...]

    def __post_init__(self):
        merged: dict[tuple, float] = defaultdict(float)
        for coef, word in self.terms:
            word = tuple((str(a), int(m)) for a, m in word)
            for a, m in word:
                if a not in AXES:
                    raise CompileError(f"unknown operator {a!r}")
                if m < 1:
                    raise CompileError(f"mode indices start at 1, got {m}")
            merged[word] += float(coef)
        object.__setattr__(self, "terms",
                           tuple((c, w) for w, c in merged.items() if c != 0.0))

    @classmethod
    def parse(cls, text: str) -> "PolynomialHamiltonian":
        """Parse e.g. ``"YZ+ZY"``, ``"0.25 X1 Z2 - Z1^2"``, ``"X³"``.

        A digit right after a letter is the mode index; powers use ``^k``.
        """
        src = text.replace(" ", "").replace("*", "").replace("−", "-")
        if not src:
            raise CompileError("empty polynomial")
        pieces = _TERM_SPLIT.split(src)
        if pieces[0] == "":
            pieces = pieces[1:]
        else:
            pieces = ["+"] + pieces
        terms = []
        for sign, body in zip(pieces[::2], pieces[1::2]):
            m = re.match(r"^(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+)?(?:/(\d+))?", body)
            coef = float(m.group(1)) if m.group(1) else 1.0
            if m.group(2):
                coef /= float(m.group(2))
            rest = body[m.end():]
            word: list[Letter] = []
            pos = 0
            while pos < len(rest):
                f = _FACTOR.match(rest, pos)
                if f is None or f.end() == pos:
                    raise CompileError(f"cannot parse {rest[pos:]!r} in {text!r}")
                axis, mode, power, sup = f.groups()
                k = int(power) if power else _SUPERSCRIPT.get(sup, 1)
                if axis != "I":
                    word.extend([(axis, int(mode) if mode else 1)] * k)
                pos = f.end()
            if not word and not m.group(1):
                raise CompileError(f"term {body!r} in {text!r} has no operators")
            terms.append(((-coef if sign == "-" else coef), tuple(word)))
        return cls(tuple(terms))

    @classmethod
    def word(cls, text: str, coef: float = 1.0) -> "PolynomialHamiltonian":
        return cls.parse(text).scaled(coef)

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(sorted({m for _, w in self.terms for _, m in w}))

    @property
    def degree(self) -> int:
        return max((len(w) for _, w in self.terms), default=0)

    def scaled(self, c: float) -> "PolynomialHamiltonian":
        return PolynomialHamiltonian(tuple((c * a, w) for a, w in self.terms))

    def __add__(self, other: "PolynomialHamiltonian") -> "PolynomialHamiltonian":
        return PolynomialHamiltonian(self.terms + other.terms)

    def __sub__(self, other: "PolynomialHamiltonian") -> "PolynomialHamiltonian":
        return self + other.scaled(-1.0)

    def __neg__(self):
        return self.scaled(-1.0)

    @staticmethod
    def _canonical(word) -> tuple:
        # letters on different modes commute: sort stably by mode
        return tuple(sorted(word, key=lambda l: l[1]))

    @staticmethod
    def _reverse(word) -> tuple:
        return tuple(reversed(word))

    def is_formally_hermitian(self) -> bool:
        """Each word is matched by its reverse with an equal coefficient."""
        coef = defaultdict(float)
        for c, w in self.terms:
            coef[self._canonical(w)] += c
        for w, c in coef.items():
            rev = self._canonical(self._reverse(w))
            if not math.isclose(coef.get(rev, 0.0), c, rel_tol=1e-12, abs_tol=1e-15):
                return False
        return True

    def symmetrized(self) -> "PolynomialHamiltonian":
        """Average every word over its distinct orderings."""
        out = []
        for c, w in self.terms:
            perms = set(itertools.permutations(w))
            out.extend((c / len(perms), p) for p in perms)
        return PolynomialHamiltonian(tuple(out))

    def __str__(self):
        parts = []
        for c, w in self.terms:
            body = "".join(f"{a}{m}" for a, m in w) or "I"
            parts.append(f"{c:+g} {body}")
        return " ".join(parts) or "0"

    def to_dict(self) -> list:
        return [{"coef": c, "word": [[a, m] for a, m in w]} for c, w in self.terms]

    @classmethod
    def from_dict(cls, data: list) -> "PolynomialHamiltonian":
        return cls(tuple((d["coef"], tuple((a, m) for a, m in d["word"])) for d in data))


def symmetrize(word: str | PolynomialHamiltonian) -> PolynomialHamiltonian:
    poly = PolynomialHamiltonian.parse(word) if isinstance(word, str) else word
    return poly.symmetrized()


def _ops_for(system: SpinSystem):
    cache = {}

    def op(axis: str, mode: int) -> SpinOperator:
        if (axis, mode) not in cache:
            _check_mode(system, mode)
            x, y, z = mode_ops(system, mode)
            cache.update({("X", mode): x, ("Y", mode): y, ("Z", mode): z})
        return cache[(axis, mode)]
    return op


def materialize(expr, system: SpinSystem) -> SpinOperator:
    """Exact matrix of a generator or polynomial on ``system``."""
    op = _ops_for(system)
    if isinstance(expr, str):
        expr = PolynomialHamiltonian.parse(expr)
    if isinstance(expr, Linear):
        m = expr.mode
        out = op("X", m) * expr.x + op("Y", m) * expr.y + op("Z", m) * expr.z
    elif isinstance(expr, Twist):
        z = op("Z", expr.mode)
        out = (z @ z) * (expr.sign * expr.strength)
    elif isinstance(expr, Pair):
        z1, z2 = op("Z", expr.modes[0]), op("Z", expr.modes[1])
        d = z1 - z2
        out = (z1 + z2 * expr.T_B) * expr.omega + (d @ d) * expr.chi
    elif isinstance(expr, QND):
        out = (op("Z", expr.modes[0]) @ op("Z", expr.modes[1])) * expr.strength
    elif isinstance(expr, Word):
        return materialize(expr.poly, system)
    elif isinstance(expr, PolynomialHamiltonian):
        out = identity(system) * 0.0
        for c, w in expr.terms:
            term = identity(system)
            for axis, mode in w:
                term = term @ op(axis, mode)
            out = out + term * c
        try:
            return out.check_hermitian()
        except SpinError:
            return out
    else:
        raise CompileError(f"cannot materialize {type(expr).__name__}")
    return out.check_hermitian()


def generator_to_dict(g: Generator) -> dict:
    if isinstance(g, Linear):
        return {"kind": "LINEAR", "mode": g.mode, "x": g.x, "y": g.y, "z": g.z}
    if isinstance(g, Twist):
        return {"kind": "TWIST", "mode": g.mode, "sign": g.sign, "strength": g.strength}
    if isinstance(g, Pair):
        return {"kind": "PAIR", "modes": list(g.modes), "omega": g.omega, "T_B": g.T_B, "chi": g.chi}
    if isinstance(g, QND):
        return {"kind": "QND", "modes": list(g.modes), "strength": g.strength}
    if isinstance(g, Word):
        return {"kind": "WORD", "terms": g.poly.to_dict()}
    raise CompileError(f"unknown generator {g!r}")


def generator_from_dict(d: dict) -> Generator:
    d = dict(d)
    kind = d.pop("kind", None)
    try:
        if kind == "LINEAR":
            return Linear(**d)
        if kind == "TWIST":
            return Twist(**d)
        if kind == "PAIR":
            return Pair(tuple(d.pop("modes")), **d)
        if kind == "QND":
            return QND(tuple(d.pop("modes")), **d)
        if kind == "WORD":
            return Word(PolynomialHamiltonian.from_dict(d["terms"]))
    except TypeError as exc:
        raise CompileError(f"bad {kind} generator: {exc}") from None
    raise CompileError(f"unknown generator kind {kind!r}")


def rotation_to(direction) -> tuple[np.ndarray, float]:
    """(axis, angle) such that e^{i angle a.J} Z e^{-i angle a.J} = n.J.

    Conjugation with angle theta rotates operator vectors by -theta about a.
    """
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    cross = np.cross(n, [0.0, 0.0, 1.0])
    s = np.linalg.norm(cross)
    if s < 1e-14:
        if n[2] > 0:
            return np.array([1.0, 0.0, 0.0]), 0.0
        return np.array([1.0, 0.0, 0.0]), math.pi
    return cross / s, math.atan2(s, n[2])
