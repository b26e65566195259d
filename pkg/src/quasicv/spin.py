"""Collective spin operators, states and exact unitary dynamics.

Everything lives in the symmetric (Dicke) subspace of N two-level atoms,
dimension N + 1, basis ordered by ascending Z eigenvalue m = -j, ..., j.
Several modes are combined with the Kronecker product, mode 1 outermost.

Conventions (hbar = 1):

* a step with generator G and duration t is exp(-i G t);
* conjugation exp(i t G) A exp(-i t G) rotates the vector of A by -t about
  the axis of G, e.g. exp(i t Z) X exp(-i t Z) = X cos t - Y sin t.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln, xlogy

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-10
# Above this dimension evolve() switches from eigendecomposition to Lanczos.
DENSE_EVOLVE_LIMIT = 4096


class SpinError(ValueError):
    """Invalid spin system, operator or state."""


@dataclass(frozen=True)
class SpinSystem:
    """Atom counts of one or more collective-spin modes."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(self.sizes)
        if not sizes:
            raise SpinError("a spin system needs at least one mode")
        for n in sizes:
            if isinstance(n, (bool, np.bool_)) or int(n) != n or n < 1:
                raise SpinError(f"atom count must be a positive integer, got {n!r}")
        object.__setattr__(self, "sizes", tuple(int(n) for n in sizes))

    @classmethod
    def single(cls, n_atoms: int) -> "SpinSystem":
        return cls((n_atoms,))

    @classmethod
    def pair(cls, n1: int, n2: int) -> "SpinSystem":
        return cls((n1, n2))

    @property
    def n_modes(self) -> int:
        return len(self.sizes)

    @property
    def n_atoms(self) -> int:
        if self.n_modes != 1:
            raise SpinError("n_atoms is defined for single-mode systems only")
        return self.sizes[0]

    @property
    def j(self) -> float:
        return self.n_atoms / 2

    @property
    def mode_dims(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.sizes)

    @property
    def dim(self) -> int:
        return int(np.prod(self.mode_dims))

    def mode(self, index: int) -> "SpinSystem":
        """Single-mode system of mode ``index`` (1-based)."""
        if not 1 <= index <= self.n_modes:
            raise SpinError(f"mode index {index} outside 1..{self.n_modes}")
        return SpinSystem.single(self.sizes[index - 1])

    def m_values(self) -> np.ndarray:
        j = self.j
        return np.arange(-j, j + 1, 1.0)


def _as_system(system: SpinSystem | int) -> SpinSystem:
    if isinstance(system, SpinSystem):
        return system
    return SpinSystem.single(system)


def _max_abs(a) -> float:
    if sp.issparse(a):
        return float(abs(a).max()) if a.nnz else 0.0
    return float(np.max(np.abs(a))) if a.size else 0.0


def is_hermitian(matrix, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(1.0, _max_abs(matrix))
    diff = matrix - matrix.conj().T
    return _max_abs(diff) <= tol * scale


@dataclass(frozen=True, eq=False)
class SpinOperator:
    """Matrix on the Dicke space of ``system``.

    ``matrix`` is a dense ndarray or a scipy sparse matrix; sparse storage is
    used only for large tensor-product spaces.
    """

    system: SpinSystem
    matrix: object
    hermitian: bool = False

    def __post_init__(self):
        m = self.matrix
        if not sp.issparse(m):
            m = np.asarray(m, dtype=complex)
            object.__setattr__(self, "matrix", m)
        else:
            m = sp.csr_matrix(m, dtype=complex)
            object.__setattr__(self, "matrix", m)
        d = self.system.dim
        if m.shape != (d, d):
            raise SpinError(f"matrix shape {m.shape} does not match system dimension {d}")
        if self.hermitian and not is_hermitian(m):
            raise SpinError("operator flagged Hermitian but matrix is not")

    @property
    def dim(self) -> int:
        return self.system.dim

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else self.matrix

    def check_hermitian(self) -> "SpinOperator":
        """Return a copy flagged Hermitian, raising if the matrix is not."""
        if self.hermitian:
            return self
        if not is_hermitian(self.matrix):
            raise SpinError("operator is not Hermitian")
        return SpinOperator(self.system, self.matrix, True)

    def dag(self) -> "SpinOperator":
        return SpinOperator(self.system, self.matrix.conj().T, self.hermitian)

    def _check_same(self, other: "SpinOperator"):
        if other.system != self.system:
            raise SpinError(f"operators act on different systems {self.system} and {other.system}")

    def __add__(self, other):
        if isinstance(other, SpinOperator):
            self._check_same(other)
            return SpinOperator(self.system, self.matrix + other.matrix,
                                self.hermitian and other.hermitian)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SpinOperator):
            self._check_same(other)
            return SpinOperator(self.system, self.matrix - other.matrix,
                                self.hermitian and other.hermitian)
        return NotImplemented

    def __neg__(self):
        return SpinOperator(self.system, -self.matrix, self.hermitian)

    def __mul__(self, scalar):
        if isinstance(scalar, SpinOperator):
            return NotImplemented
        c = complex(scalar)
        herm = self.hermitian and c.imag == 0
        return SpinOperator(self.system, self.matrix * c, herm)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        if isinstance(other, SpinOperator):
            self._check_same(other)
            return SpinOperator(self.system, self.matrix @ other.matrix)
        return NotImplemented

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise SpinError("only non-negative integer powers are supported")
        out = identity(self.system)
        for _ in range(int(k)):
            out = out @ self
        return SpinOperator(self.system, out.matrix, self.hermitian)

    def expect(self, state: "SpinState") -> complex:
        if state.system != self.system:
            raise SpinError("state and operator belong to different systems")
        v = state.vector
        return complex(np.vdot(v, self.matrix @ v))


@dataclass(frozen=True, eq=False)
class SpinState:
    """Normalized state vector on the Dicke space of ``system``."""

    system: SpinSystem
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=complex).reshape(-1)
        if v.shape != (self.system.dim,):
            raise SpinError(f"state length {v.shape[0]} does not match dimension {self.system.dim}")
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > NORM_TOL:
            raise SpinError(f"state not normalized (norm {norm:.3e})")
        object.__setattr__(self, "vector", v)

    @classmethod
    def normalized(cls, system: SpinSystem, vector) -> "SpinState":
        v = np.asarray(vector, dtype=complex).reshape(-1)
        n = np.linalg.norm(v)
        if n == 0:
            raise SpinError("cannot normalize the zero vector")
        return cls(system, v / n)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


def commutator(a: SpinOperator, b: SpinOperator) -> SpinOperator:
    return a @ b - b @ a


def identity(system: SpinSystem | int) -> SpinOperator:
    system = _as_system(system)
    if system.dim > DENSE_EVOLVE_LIMIT:
        return SpinOperator(system, sp.identity(system.dim, dtype=complex, format="csr"), True)
    return SpinOperator(system, np.eye(system.dim, dtype=complex), True)


def build_collective_ops(system: SpinSystem | int) -> tuple[SpinOperator, SpinOperator, SpinOperator]:
    """X, Y, Z of a single collective spin with j = N/2."""
    system = _as_system(system)
    if system.n_modes != 1:
        raise SpinError("collective operators are built per mode; use embed() for pairs")
    j = system.j
    m = system.m_values()
    # <m+1|J+|m> sits just below the diagonal because m ascends with the index.
    # (j - m)(j + m + 1) is an exact integer product for half-integer m
    ladder = np.sqrt((j - m[:-1]) * (j + m[:-1] + 1))
    jp = np.diag(ladder, k=-1).astype(complex)
    jm = jp.conj().T
    x = (jp + jm) / 2
    y = (jp - jm) / 2j
    z = np.diag(m).astype(complex)
    return (SpinOperator(system, x, True), SpinOperator(system, y, True),
            SpinOperator(system, z, True))


def casimir_check(x: SpinOperator, y: SpinOperator, z: SpinOperator) -> float:
    """Max-norm of X^2 + Y^2 + Z^2 - j(j+1) I."""
    if not (x.system == y.system == z.system):
        raise SpinError("operators come from different systems")
    j = x.system.j
    c = x @ x + y @ y + z @ z - identity(x.system) * (j * (j + 1))
    return _max_abs(c.matrix)


@dataclass(frozen=True, eq=False)
class QuasiCV:
    """Scaled coordinates q = sqrt(2/N) Z and p = sqrt(2/N) X."""

    q: SpinOperator
    p: SpinOperator

    @classmethod
    def of(cls, system: SpinSystem | int) -> "QuasiCV":
        system = _as_system(system)
        x, _, z = build_collective_ops(system)
        s = np.sqrt(2.0 / system.n_atoms)
        return cls(z * s, x * s)


def basis_state(system: SpinSystem | int, m: float) -> SpinState:
    system = _as_system(system)
    idx = m + system.j
    if abs(idx - round(idx)) > 1e-12 or not 0 <= round(idx) <= system.n_atoms:
        raise SpinError(f"m = {m} is not a valid magnetic number for j = {system.j}")
    v = np.zeros(system.dim, dtype=complex)
    v[int(round(idx))] = 1.0
    return SpinState(system, v)


def _expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def coherent_state(system: SpinSystem | int, theta: float, phi: float) -> SpinState:
    """exp(-i Z phi) exp(-i Y theta) |m = -j>.

    theta = pi/2, phi = 0 gives the equatorial state with <X> = -N/2.
    """
    system = _as_system(system)
    if system.n_modes != 1:
        raise SpinError("coherent states are built per mode")
    n = system.n_atoms
    k = np.arange(n + 1)  # k = j + m
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    with np.errstate(divide="ignore"):
        log_binom = (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)) / 2
        mag = np.exp(log_binom + xlogy(n - k, abs(c)) + xlogy(k, abs(s)))
    sign = np.sign(c) ** (n - k) * (-np.sign(s)) ** k
    v = (sign * mag).astype(complex)
    v *= np.exp(-1j * phi * system.m_values())
    return SpinState.normalized(system, v)


def rotate(state: SpinState, axis: Sequence[float], angle: float) -> SpinState:
    """Apply exp(-i angle n.J) to a single-mode state."""
    n = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0:
        raise SpinError("rotation axis must be non-zero")
    n = n / norm
    x, y, z = build_collective_ops(state.system)
    g = n[0] * x.matrix + n[1] * y.matrix + n[2] * z.matrix
    return SpinState(state.system, _expm_hermitian(g, angle) @ state.vector)


def _lanczos_propagate(matvec, v: np.ndarray, t: float, krylov_dim: int = 40,
                       tol: float = 1e-13) -> np.ndarray:
    """exp(-i H t) v for Hermitian H given as a matvec, adaptive time steps."""
    beta0 = np.linalg.norm(v)
    if beta0 == 0 or t == 0:
        return v.copy()
    n = v.shape[0]
    m_max = min(krylov_dim, n)
    out = v.astype(complex)
    remaining = float(t)
    step = remaining
    while abs(remaining) > 0:
        step = np.sign(remaining) * min(abs(step), abs(remaining))
        basis = np.zeros((m_max + 1, n), dtype=complex)
        alpha = np.zeros(m_max)
        beta = np.zeros(m_max)
        nrm = np.linalg.norm(out)
        basis[0] = out / nrm
        m = m_max
        for k in range(m_max):
            w = matvec(basis[k])
            alpha[k] = np.vdot(basis[k], w).real
            w = w - alpha[k] * basis[k] - (beta[k - 1] * basis[k - 1] if k else 0)
            # full reorthogonalization keeps the small tridiagonal problem honest
            w -= basis[: k + 1].T @ (basis[: k + 1].conj() @ w)
            beta[k] = np.linalg.norm(w)
            if beta[k] < 1e-14:
                m = k + 1
                break
            basis[k + 1] = w / beta[k]
        tri = np.diag(alpha[:m]) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
        while True:
            w_, u_ = np.linalg.eigh(tri)
            coef = u_ @ (np.exp(-1j * w_ * step) * u_[0].conj())
            err = abs(beta[m - 1] * coef[-1]) if m == m_max else 0.0
            if err <= tol or abs(step) < 1e-300:
                break
            step /= 2
        out = nrm * (basis[:m].T @ coef)
        remaining -= step
        step *= 1.5
    return out


def evolve(state: SpinState, h: SpinOperator, t: float) -> SpinState:
    """exp(-i H t) |state>."""
    if state.system != h.system:
        raise SpinError("state and Hamiltonian belong to different systems")
    h = h.check_hermitian()
    if h.dim <= DENSE_EVOLVE_LIMIT:
        v = _expm_hermitian(h.dense(), t) @ state.vector
    else:
        mat = h.matrix if h.is_sparse else sp.csr_matrix(h.matrix)
        v = _lanczos_propagate(lambda u: mat @ u, state.vector, t)
    # SpinState re-validates the norm, so any propagation drift > 1e-10 raises
    return SpinState(state.system, v)


def embed(op: SpinOperator, mode_index: int, system: SpinSystem) -> SpinOperator:
    """Lift a single-mode operator onto mode ``mode_index`` (1-based) of ``system``."""
    if op.system.n_modes != 1:
        raise SpinError("only single-mode operators can be embedded")
    target = system.mode(mode_index)
    if target != op.system:
        raise SpinError(f"operator dimension {op.dim} does not match mode {mode_index} "
                        f"of {system}")
    use_sparse = system.dim > DENSE_EVOLVE_LIMIT
    out = None
    for k, d in enumerate(system.mode_dims, start=1):
        if k == mode_index:
            factor = sp.csr_matrix(op.matrix) if use_sparse else op.dense()
        else:
            factor = sp.identity(d, format="csr") if use_sparse else np.eye(d)
        if out is None:
            out = factor
        elif use_sparse:
            out = sp.kron(out, factor, format="csr")
        else:
            out = np.kron(out, factor)
    return SpinOperator(system, out, op.hermitian)


def mode_ops(system: SpinSystem, mode_index: int) -> tuple[SpinOperator, SpinOperator, SpinOperator]:
    """X, Y, Z of one mode embedded in ``system``."""
    ops = build_collective_ops(system.mode(mode_index))
    if system.n_modes == 1:
        return ops
    return tuple(embed(o, mode_index, system) for o in ops)


def product_state(system: SpinSystem, states: Sequence[SpinState]) -> SpinState:
    if len(states) != system.n_modes:
        raise SpinError("need one state per mode")
    v = np.ones(1, dtype=complex)
    for k, s in enumerate(states, start=1):
        if s.system != system.mode(k):
            raise SpinError(f"state {k} does not match mode {k}")
        v = np.kron(v, s.vector)
    return SpinState.normalized(system, v)


def overlap(psi1: SpinState, psi2: SpinState) -> float:
    """|<psi1|psi2>|^2."""
    if psi1.system != psi2.system:
        raise SpinError("states belong to different systems")
    return float(min(1.0, abs(np.vdot(psi1.vector, psi2.vector)) ** 2))


def moments(state: SpinState, op: SpinOperator) -> tuple[float, float]:
    """Mean and variance of a Hermitian observable."""
    if state.system != op.system:
        raise SpinError("state and operator belong to different systems")
    v = state.vector
    w = op.matrix @ v
    mean = np.vdot(v, w)
    if abs(mean.imag) > 1e-10 * max(1.0, abs(mean.real)):
        raise SpinError("expectation value is not real; operator is not Hermitian")
    second = np.vdot(w, w).real
    return float(mean.real), float(second - mean.real ** 2)


def random_state(system: SpinSystem, rng: np.random.Generator) -> SpinState:
    v = rng.normal(size=system.dim) + 1j * rng.normal(size=system.dim)
    return SpinState.normalized(system, v)


def random_product_state(system: SpinSystem, rng: np.random.Generator) -> SpinState:
    return product_state(system, [random_state(system.mode(k), rng)
                                  for k in range(1, system.n_modes + 1)])


def unitary_from_hamiltonian(h: SpinOperator, t: float) -> np.ndarray:
    """Dense exp(-i H t); for verification on small spaces."""
    h = h.check_hermitian()
    return _expm_hermitian(h.dense(), t)
