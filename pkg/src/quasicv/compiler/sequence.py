"""Pulse sequences: composition, inversion, exact unitaries and verification."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.linalg as sla

from ..spin import SpinOperator, SpinSystem
from .generators import (CompileError, Generator, Linear, Pair, generator_from_dict,
                         generator_to_dict, materialize)

MAX_DIM = 20000
UNITARITY_TOL = 1e-10
BRANCH_TOL = 1e-6


class UnitarityError(CompileError):
    """A compiled product drifted away from unitarity."""


@dataclass(frozen=True)
class Step:
    generator: Generator
    duration: float

    def __post_init__(self):
        d = float(self.duration)
        if not math.isfinite(d) or d < 0:
            raise CompileError(f"step duration must be finite and non-negative, got {self.duration}")
        object.__setattr__(self, "duration", d)


def _flip_pair(pair: Pair) -> tuple[list[Step], list[Step]]:
    # pi rotations about X send Z -> -Z on both modes; with chi flipped this negates H
    m1, m2 = pair.modes
    pre = [Step(Linear(m1, x=1.0), math.pi), Step(Linear(m2, x=1.0), math.pi)]
    post = [Step(Linear(m1, x=-1.0), math.pi), Step(Linear(m2, x=-1.0), math.pi)]
    return pre, post


def _negated_steps(step: Step) -> list[Step]:
    g = step.generator
    if isinstance(g, Pair):
        pre, post = _flip_pair(g)
        return pre + [Step(g.flip_detuning(), step.duration)] + post
    negate = getattr(g, "negated", None)
    if negate is None:
        raise CompileError(f"{type(g).__name__} has no sign knob and cannot be inverted")
    return [Step(negate(), step.duration)]


@dataclass(frozen=True, eq=False)
class Block:
    """A sub-sequence applied ``count`` times in a row."""

    body: "PulseSequence"
    count: int

    def __post_init__(self):
        if int(self.count) < 1:
            raise CompileError("block repetition count must be >= 1")
        object.__setattr__(self, "count", int(self.count))


@dataclass(frozen=True, eq=False)
class PulseSequence:
    """Time-ordered steps; the first step acts first on the state.

    Entries are ``Step`` or ``Block`` (a repeated sub-sequence), which keeps
    long synthesized sequences compact. ``flat_steps`` expands them.
    """

    steps: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __add__(self, other: "PulseSequence") -> "PulseSequence":
        return PulseSequence(self.steps + other.steps, dict(self.metadata))

    def __len__(self):
        """Number of primitive steps after expansion."""
        return sum(e.count * len(e.body) if isinstance(e, Block) else 1 for e in self.steps)

    def __eq__(self, other):
        if not isinstance(other, PulseSequence):
            return NotImplemented
        return list(self.flat_steps()) == list(other.flat_steps())

    __hash__ = object.__hash__

    def flat_steps(self) -> Iterator[Step]:
        for e in self.steps:
            if isinstance(e, Block):
                for _ in range(e.count):
                    yield from e.body.flat_steps()
            else:
                yield e

    @classmethod
    def single(cls, gen: Generator, duration: float) -> "PulseSequence":
        return cls((Step(gen, duration),))

    @classmethod
    def concat(cls, parts: Iterable["PulseSequence"], **metadata) -> "PulseSequence":
        steps = []
        for p in parts:
            steps.extend(p.steps)
        return cls(tuple(steps), metadata)

    def repeated(self, n: int) -> "PulseSequence":
        if n == 1:
            return self
        return PulseSequence((Block(PulseSequence(self.steps), n),), dict(self.metadata))

    def scaled(self, factor: float) -> "PulseSequence":
        """Every duration multiplied by ``factor`` (exact only for linear-in-time blocks)."""
        out = [Block(e.body.scaled(factor), e.count) if isinstance(e, Block)
               else Step(e.generator, e.duration * factor) for e in self.steps]
        return PulseSequence(tuple(out), dict(self.metadata))

    def inverse(self) -> "PulseSequence":
        """Exact inverse: reversed order, each step negated by its sign knob."""
        out = []
        for e in reversed(self.steps):
            if isinstance(e, Block):
                out.append(Block(e.body.inverse(), e.count))
            else:
                out.extend(_negated_steps(e))
        return PulseSequence(tuple(out), {"inverse_of": self.metadata.get("target", "")})

    @property
    def total_duration(self) -> float:
        return float(sum(e.count * e.body.total_duration if isinstance(e, Block) else e.duration
                         for e in self.steps))

    def to_dict(self) -> dict:
        def entry(e):
            if isinstance(e, Block):
                return {"repeat": e.count, "steps": [entry(x) for x in e.body.steps]}
            return {"generator": generator_to_dict(e.generator), "duration": e.duration}
        return {"metadata": self.metadata, "steps": [entry(e) for e in self.steps]}

    @classmethod
    def from_dict(cls, data: dict) -> "PulseSequence":
        def entry(d):
            if "repeat" in d:
                return Block(cls(tuple(entry(x) for x in d["steps"])), d["repeat"])
            return Step(generator_from_dict(d["generator"]), d["duration"])
        try:
            steps = tuple(entry(d) for d in data.get("steps", []))
        except (KeyError, TypeError) as exc:
            raise CompileError(f"malformed pulse-sequence entry: {exc}") from None
        return cls(steps, dict(data.get("metadata", {})))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "PulseSequence":
        return cls.from_dict(json.loads(Path(path).read_text()))


def evolve_block(gen: Generator, tau: float) -> PulseSequence:
    """e^{-i gen tau} for either sign of tau."""
    seq = PulseSequence.single(gen, abs(tau))
    return seq if tau >= 0 else seq.inverse()


def conjugate(seq: PulseSequence, axis: Linear, angle: float) -> PulseSequence:
    """Sequence realizing e^{i angle G} U e^{-i angle G} for G = ``axis``."""
    if angle == 0:
        return seq
    return evolve_block(axis, angle) + seq + evolve_block(axis, -angle)


def conjugate_by_rotation(gen: Generator, axis: Linear, angle: float,
                          duration: float = 1.0) -> PulseSequence:
    """Three-step sequence evolving under e^{i angle G} gen e^{-i angle G}."""
    out = conjugate(PulseSequence.single(gen, duration), axis, angle)
    return PulseSequence(out.steps, {"method": "conjugation", "angle": angle})


def group_commutator_gadget(a, b, dt: float, balanced: bool = False) -> PulseSequence:
    """e^{-iA s} e^{-iB s} e^{iA s} e^{iB s} (matrix order) with s = dt.

    The product is e^{-s^2 [A, B]} + O(s^3), i.e. it evolves under the
    Hermitian generator -i[A, B] for an effective time s^2. ``balanced``
    appends the same gadget for (-A, -B) at s / sqrt(2), which cancels the
    s^3 term and leaves O(s^4).

    ``a`` and ``b`` are generators or callables tau -> PulseSequence.
    """
    blk_a = a if callable(a) else (lambda tau, g=a: evolve_block(g, tau))
    blk_b = b if callable(b) else (lambda tau, g=b: evolve_block(g, tau))
    if balanced:
        s = dt / math.sqrt(2)
        parts = [blk_b(-s), blk_a(-s), blk_b(s), blk_a(s),
                 blk_b(s), blk_a(s), blk_b(-s), blk_a(-s)]
        order = 4
    else:
        parts = [blk_b(-dt), blk_a(-dt), blk_b(dt), blk_a(dt)]
        order = 3
    return PulseSequence.concat(parts, method="group_commutator", effective_time=dt ** 2,
                                error_order=order)


def trotter_compose(sequences: Sequence[PulseSequence], n: int, order: int = 2) -> PulseSequence:
    """Interleave term sequences in ``n`` slices.

    Each input sequence realizes its term for the full time; a slice scales
    its durations by 1/n. Order 1 is sequential, order 2 symmetric.
    """
    if n < 1:
        raise CompileError("repetitions must be >= 1")
    if order not in (1, 2):
        raise CompileError("only first- and second-order interleavings are supported")
    seqs = list(sequences)
    if not seqs:
        return PulseSequence((), {"method": "trotter", "order": order, "repetitions": n})
    if order == 1:
        one = PulseSequence.concat(s.scaled(1 / n) for s in seqs)
    else:
        half = [s.scaled(0.5 / n) for s in seqs[:-1]]
        one = PulseSequence.concat(half + [seqs[-1].scaled(1 / n)] + half[::-1])
    out = one.repeated(n)
    return PulseSequence(out.steps, {"method": "trotter", "order": order, "repetitions": n})


@lru_cache(maxsize=512)
def _eig(gen: Generator, system: SpinSystem):
    h = materialize(gen, system).dense()
    return np.linalg.eigh(h)


@lru_cache(maxsize=4096)
def _step_unitary(gen: Generator, system: SpinSystem, duration: float) -> np.ndarray:
    w, v = _eig(gen, system)
    return (v * np.exp(-1j * w * duration)) @ v.conj().T


def _unitary_power(u: np.ndarray, k: int) -> np.ndarray:
    # spectral power keeps long repetitions unitary to rounding
    if k == 1:
        return u
    tri, q = sla.schur(u, output="complex")
    lam = np.diag(tri)
    lam = lam / np.abs(lam)
    return (q * lam ** k) @ q.conj().T


def _product(seq: PulseSequence, system: SpinSystem, memo: dict) -> np.ndarray:
    key = id(seq)
    if key in memo:
        return memo[key][1]
    u = np.eye(system.dim, dtype=complex)
    for e in seq.steps:
        if isinstance(e, Block):
            u = _unitary_power(_product(e.body, system, memo), e.count) @ u
        elif e.duration:
            u = _step_unitary(e.generator, system, e.duration) @ u
    memo[key] = (seq, u)  # keep seq alive so its id stays unique
    return u


def sequence_to_unitary(seq: PulseSequence, system: SpinSystem) -> np.ndarray:
    """Ordered product of the step exponentials (later steps on the left)."""
    if system.dim > MAX_DIM:
        raise CompileError(f"dimension {system.dim} exceeds the {MAX_DIM} limit for dense unitaries")
    u = _product(seq, system, {})
    dev = float(np.max(np.abs(u.conj().T @ u - np.eye(system.dim))))
    if dev > UNITARITY_TOL:
        raise UnitarityError(f"compiled product is not unitary (deviation {dev:.2e})")
    return u


def effective_generator(u: np.ndarray, t: float, system: SpinSystem | None = None) -> SpinOperator:
    """H_eff = (i/t) log U with eigenphases in (-pi, pi]."""
    u = np.asarray(u, dtype=complex)
    if system is None:
        system = SpinSystem.single(u.shape[0] - 1)
    if t == 0:
        raise CompileError("effective generator needs t != 0")
    # unitary matrices are normal, so the complex Schur form is diagonal
    tri, q = sla.schur(u, output="complex")
    phases = np.angle(np.diag(tri))
    if np.any(np.pi - np.abs(phases) < BRANCH_TOL):
        warnings.warn("eigenphase within 1e-6 of pi: matrix logarithm branch is ambiguous",
                      RuntimeWarning, stacklevel=2)
    phases = np.where(phases <= -np.pi, np.pi, phases)
    h = -(q * phases) @ q.conj().T / t
    h = (h + h.conj().T) / 2
    return SpinOperator(system, h, True)


def fidelity(u: np.ndarray, v: np.ndarray, states: Sequence[np.ndarray]) -> float:
    """Minimum |<psi| U^dag V |psi>|^2 over ``states``."""
    return float(min(abs(np.vdot(u @ s, v @ s)) ** 2 for s in states))


def max_norm(a) -> float:
    a = a.dense() if isinstance(a, SpinOperator) else np.asarray(a)
    return float(np.max(np.abs(a)))
