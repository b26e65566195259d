"""Steady-state solver for beam-splitter / cavity interferometer networks.

A network is a set of elements joined by propagation edges. Every element
port carries one outgoing wave; the wave arriving at a port is the
partner's outgoing wave times the edge phase factor. Beam splitters use the
transfer matrix (t, ir; ir, t) between port pairs {1, 2} and {3, 4}:

    out3 = i r in1 + t in2      out1 = i r in3 + t in4
    out4 = t in1 + i r in2      out2 = t in3 + i r in4

Cavities are one-port reflectors with the exact cavity response evaluated
at alpha = phi + 2 L dk; mirrors reflect with a fixed amplitude; open ports
absorb everything and the designated input emits unit amplitude.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .optics import (PhysicalParams, ac_stark_shift_rate, cavity_buildup_exact,
                     cavity_reflection, phase_per_atom)

BS_PORTS = ("1", "2", "3", "4")
RESIDUAL_TOL = 1e-10
SELECTIVITY_THRESHOLD = 0.1
# One-way phases found by minimizing the worst off-target ratio over all ten
# pairs; symmetric choices leave some stage-B cavities dark.
FIVE_CAVITY_PATH_PHASES = (1.3951, 2.4057, 2.1453, 2.7422, 0.3693, 2.3492)


class NetworkError(ValueError):
    """Malformed network description."""


class SingularNetworkError(RuntimeError):
    """The scattering system has no unique steady state."""

    def __init__(self, message: str, loop: list[str]):
        super().__init__(f"{message}; offending loop: {' -> '.join(loop)}")
        self.loop = loop


class FitError(RuntimeError):
    """The quadratic Hamiltonian fit is underdetermined or ill-conditioned."""


@dataclass(frozen=True)
class BeamSplitter:
    id: str
    T_B: float
    type: str = field(default="beam_splitter", init=False)

    ports = BS_PORTS

    def __post_init__(self):
        if not 0 <= self.T_B <= 1:
            raise NetworkError(f"beam splitter {self.id}: T_B must lie in [0, 1]")


@dataclass(frozen=True)
class Port:
    """Open port. The network input emits unit amplitude, others only drain."""

    id: str
    type: str = field(default="port", init=False)

    ports = ("",)


@dataclass(frozen=True)
class Cavity:
    id: str
    T: float
    eps: float
    L: float
    dk: float
    mode: int
    type: str = field(default="cavity", init=False)

    ports = ("",)


@dataclass(frozen=True)
class Mirror:
    id: str
    reflectivity: float = 1.0
    type: str = field(default="mirror", init=False)

    ports = ("",)


@dataclass(frozen=True)
class Edge:
    """Propagation segment between two ports with one-way phase k * L_segment."""

    a: str
    b: str
    phase: float = 0.0


_NODE_TYPES = {"beam_splitter": BeamSplitter, "port": Port}
_TERMINATION_TYPES = {"cavity": Cavity, "mirror": Mirror}


def _split(ref: str) -> tuple[str, str]:
    elem, _, port = ref.partition(":")
    return elem, port


@dataclass(frozen=True)
class NetworkSpec:
    nodes: tuple
    terminations: tuple
    edges: tuple[Edge, ...]
    input: str
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "terminations", tuple(self.terminations))
        object.__setattr__(self, "edges", tuple(self.edges))
        self._validate()

    @property
    def elements(self) -> dict:
        return {e.id: e for e in itertools.chain(self.nodes, self.terminations)}

    @property
    def cavities(self) -> list[Cavity]:
        return sorted((t for t in self.terminations if isinstance(t, Cavity)),
                      key=lambda c: c.mode)

    @property
    def n_modes(self) -> int:
        return len(self.cavities)

    def _validate(self):
        elements = {}
        for e in itertools.chain(self.nodes, self.terminations):
            if e.id in elements:
                raise NetworkError(f"duplicate element id {e.id!r}")
            elements[e.id] = e
        if not isinstance(elements.get(self.input), Port):
            raise NetworkError(f"input {self.input!r} must be an open port")
        used: dict[tuple[str, str], int] = {}
        for edge in self.edges:
            for ref in (edge.a, edge.b):
                elem, port = _split(ref)
                if elem not in elements:
                    raise NetworkError(f"edge refers to unknown element {elem!r}")
                if port not in elements[elem].ports:
                    raise NetworkError(f"element {elem!r} has no port {port!r}")
                key = (elem, port)
                used[key] = used.get(key, 0) + 1
        for elem in elements.values():
            for port in elem.ports:
                n = used.get((elem.id, port), 0)
                if n != 1:
                    name = f"{elem.id}:{port}" if port else elem.id
                    raise NetworkError(f"port {name} is connected {n} times, expected exactly once")
        modes = [c.mode for c in self.cavities]
        if len(set(modes)) != len(modes):
            raise NetworkError("cavity mode indices must be distinct")
        if sorted(modes) != list(range(1, len(modes) + 1)):
            raise NetworkError("cavity modes must be numbered 1..n")

    def with_detunings(self, dks: Sequence[float]) -> "NetworkSpec":
        """Copy with cavity mode j detuned by dks[j-1]."""
        by_mode = {c.mode: c for c in self.cavities}
        if len(dks) != len(by_mode):
            raise NetworkError("need one detuning per cavity")
        new_terms = tuple(replace(t, dk=float(dks[t.mode - 1])) if isinstance(t, Cavity) else t
                          for t in self.terminations)
        return replace(self, terminations=new_terms)

    def to_dict(self) -> dict:
        def elem(e):
            d = asdict(e)
            d = {"id": d.pop("id"), "type": e.type, **{k: v for k, v in d.items() if k != "type"}}
            return d
        return {
            "name": self.name,
            "input": self.input,
            "nodes": [elem(n) for n in self.nodes],
            "terminations": [elem(t) for t in self.terminations],
            "edges": [{"from": e.a, "to": e.b, "phase": e.phase} for e in self.edges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        try:
            nodes = [_build(n, _NODE_TYPES) for n in data["nodes"]]
            terms = [_build(t, _TERMINATION_TYPES) for t in data.get("terminations", [])]
            edges = [Edge(e["from"], e["to"], float(e.get("phase", 0.0))) for e in data["edges"]]
            return cls(nodes, terms, edges, data["input"], data.get("name", ""))
        except KeyError as exc:
            raise NetworkError(f"network description is missing {exc}") from None


def _build(d: dict, registry: dict):
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in registry:
        raise NetworkError(f"unknown element type {kind!r}")
    try:
        return registry[kind](**d)
    except TypeError as exc:
        raise NetworkError(f"bad {kind} entry {d}: {exc}") from None


def load_network(path: str | Path) -> NetworkSpec:
    return NetworkSpec.from_dict(json.loads(Path(path).read_text()))


def dump_network(spec: NetworkSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2))


@dataclass
class NetworkSolution:
    outgoing: dict[str, complex]
    incoming: dict[str, complex]
    cavity_power: dict[int, float]
    output_power: dict[str, float]
    residual: float

    @property
    def total_output_power(self) -> float:
        return float(sum(self.output_power.values()))

    def edge_amplitudes(self, spec: NetworkSpec) -> dict[str, complex]:
        """Amplitude leaving each end of each edge, keyed ``"from->to"``."""
        out = {}
        for e in spec.edges:
            out[f"{e.a}->{e.b}"] = self.outgoing[e.a]
            out[f"{e.b}->{e.a}"] = self.outgoing[e.b]
        return out


def _port_ref(elem_id: str, port: str) -> str:
    return f"{elem_id}:{port}" if port else elem_id


def _assemble(spec: NetworkSpec, phases: Sequence[float]):
    elements = spec.elements
    refs = [_port_ref(e.id, p) for e in elements.values() for p in e.ports]
    index = {r: i for i, r in enumerate(refs)}
    partner: dict[str, tuple[str, complex]] = {}
    for e in spec.edges:
        ph = np.exp(1j * e.phase)
        partner[e.a] = (e.b, ph)
        partner[e.b] = (e.a, ph)

    rows, cols, vals = list(range(len(refs))), list(range(len(refs))), [1.0 + 0j] * len(refs)
    rhs = np.zeros(len(refs), dtype=complex)
    alphas = {}

    def couple(out_ref, in_ref, s):
        src, ph = partner[in_ref]
        rows.append(index[out_ref])
        cols.append(index[src])
        vals.append(-s * ph)

    for elem in elements.values():
        if isinstance(elem, BeamSplitter):
            t = math.sqrt(elem.T_B)
            ir = 1j * math.sqrt(1 - elem.T_B)
            p = {k: _port_ref(elem.id, k) for k in BS_PORTS}
            for out_k, pairs in (("3", (("1", ir), ("2", t))), ("4", (("1", t), ("2", ir))),
                                 ("1", (("3", ir), ("4", t))), ("2", (("3", t), ("4", ir)))):
                for in_k, s in pairs:
                    couple(p[out_k], p[in_k], s)
        elif isinstance(elem, Cavity):
            phi = phases[elem.mode - 1] if phases is not None else 0.0
            alpha = phi + 2 * elem.L * elem.dk
            alphas[elem.mode] = alpha
            couple(elem.id, elem.id, complex(cavity_reflection(alpha, elem.T, elem.eps)))
        elif isinstance(elem, Mirror):
            couple(elem.id, elem.id, elem.reflectivity)
        elif isinstance(elem, Port) and elem.id == spec.input:
            rhs[index[elem.id]] = 1.0
    a = sp.csr_matrix((vals, (rows, cols)), shape=(len(refs), len(refs)))
    return a, rhs, refs, index, partner, alphas


def _offending_loop(a: sp.csr_matrix, refs: list[str]) -> list[str]:
    _, _, vh = np.linalg.svd(a.toarray())
    null = np.abs(vh[-1].conj())
    return [refs[i] for i in np.flatnonzero(null > 1e-6 * null.max())]


def solve_steady_state(spec: NetworkSpec, phases: Sequence[float] | None = None) -> NetworkSolution:
    """Solve the scattering equations for atom phases ``phases[mode - 1]``."""
    if phases is not None and len(phases) != spec.n_modes:
        raise NetworkError(f"expected {spec.n_modes} atom phases, got {len(phases)}")
    a, rhs, refs, index, partner, alphas = _assemble(spec, phases)
    dense = a.toarray()
    s = np.linalg.svd(dense, compute_uv=False)
    if s[-1] < 1e-12 * s[0]:
        raise SingularNetworkError("scattering system is singular (lossless loop on resonance)",
                                   _offending_loop(a, refs))
    x = spla.spsolve(a.tocsc(), rhs)
    residual = float(np.linalg.norm(a @ x - rhs))
    if residual > RESIDUAL_TOL:
        raise SingularNetworkError(f"steady-state residual {residual:.2e} too large",
                                   _offending_loop(a, refs))
    outgoing = {r: complex(x[index[r]]) for r in refs}
    incoming = {r: complex(x[index[partner[r][0]]] * partner[r][1]) for r in refs}
    cavity_power = {}
    for c in spec.cavities:
        cavity_power[c.mode] = float(abs(incoming[c.id]) ** 2
                                     * cavity_buildup_exact(alphas[c.mode], c.T, c.eps))
    output_power = {e.id: abs(incoming[e.id]) ** 2 for e in spec.nodes if isinstance(e, Port)}
    return NetworkSolution(outgoing, incoming, cavity_power, output_power, residual)


def michelson_network(T_B: float, T: float, eps: float, L: float, dk: float,
                      arm_phases: Sequence[float] = (0.0, math.pi, 0.0)) -> NetworkSpec:
    """Two-cavity Michelson setup; ``arm_phases`` are round-trip phases of arms a, b, c."""
    th_a, th_b, th_c = arm_phases
    return NetworkSpec(
        nodes=[Port("in"), BeamSplitter("BS", T_B)],
        terminations=[Cavity("cav1", T, eps, L, dk, 1), Mirror("mirror_b"),
                      Cavity("cav2", T, eps, L, dk, 2)],
        edges=[Edge("in", "BS:1"), Edge("BS:3", "cav1", th_a / 2),
               Edge("BS:4", "mirror_b", th_b / 2), Edge("BS:2", "cav2", th_c / 2)],
        input="in", name="michelson")


def single_cavity_network(T: float, eps: float, L: float, dk: float) -> NetworkSpec:
    return NetworkSpec(nodes=[Port("in")], terminations=[Cavity("cav1", T, eps, L, dk, 1)],
                       edges=[Edge("in", "cav1")], input="in", name="single_cavity")


def five_cavity_network(T: float = 5e-3, eps: float = 1.2e-6, L: float = 0.026,
                        dks: Sequence[float] = (0.0,) * 5, T_B: Sequence[float] = (0.5, 0.5),
                        path_phases: Sequence[float] | None = None) -> NetworkSpec:
    """Two nested Michelson stages carrying five cavities.

    Stage A splits the input between cavities 1 (port 3), 2 (port 4) and the
    stage-B splitter (port 2); stage B feeds cavities 3 (port 3), 4 (port 4)
    and 5 (port 2). ``path_phases`` are one-way phases of the six internal
    edges in the order cav1, cav2, A-B link, cav3, cav4, cav5.
    """
    if path_phases is None:
        path_phases = FIVE_CAVITY_PATH_PHASES
    p = list(path_phases)
    cav = [Cavity(f"cav{m}", T, eps, L, float(dks[m - 1]), m) for m in range(1, 6)]
    return NetworkSpec(
        nodes=[Port("in"), BeamSplitter("BS_A", T_B[0]), BeamSplitter("BS_B", T_B[1])],
        terminations=cav,
        edges=[Edge("in", "BS_A:1"), Edge("BS_A:3", "cav1", p[0]), Edge("BS_A:4", "cav2", p[1]),
               Edge("BS_A:2", "BS_B:1", p[2]), Edge("BS_B:3", "cav3", p[3]),
               Edge("BS_B:4", "cav4", p[4]), Edge("BS_B:2", "cav5", p[5])],
        input="in", name="five_cavity")


@dataclass
class ClassicalHamiltonianFit:
    """H(Z) / hbar = sum_j omega_j Z_j + sum_jk chi_jk Z_j Z_k, chi symmetric."""

    omega: np.ndarray
    chi: np.ndarray
    residual: float
    relative_residual: float
    n_points: int


def network_hamiltonian(spec: NetworkSpec, params: PhysicalParams, z: Sequence[float]) -> float:
    """H/hbar (rad/s) for spin values Z_j, phi_j = 2 dphi Z_j."""
    z = np.asarray(z, dtype=float)
    dphi = phase_per_atom(params)
    sol = solve_steady_state(spec, 2 * dphi * z)
    powers = np.array([sol.cavity_power[m] for m in range(1, spec.n_modes + 1)])
    w = ac_stark_shift_rate(params, powers * params.rate)
    return float(2 * np.dot(w, z))


def product_grid(values: Iterable[float], n_modes: int) -> np.ndarray:
    return np.array(list(itertools.product(list(values), repeat=n_modes)), dtype=float)


def effective_classical_hamiltonian(spec: NetworkSpec, z_grid, params: PhysicalParams,
                                    cond_limit: float = 1e10) -> ClassicalHamiltonianFit:
    """Least-squares quadratic model of the network Hamiltonian over ``z_grid``."""
    z_grid = np.atleast_2d(np.asarray(z_grid, dtype=float))
    m = spec.n_modes
    if z_grid.shape[1] != m:
        raise FitError(f"grid points need {m} coordinates")
    pairs = [(j, k) for j in range(m) for k in range(j, m)]
    design = np.column_stack([z_grid[:, j] for j in range(m)]
                             + [z_grid[:, j] * z_grid[:, k] for j, k in pairs])
    n_par = design.shape[1]
    scale = np.max(np.abs(design), axis=0)
    if np.any(scale == 0) or np.linalg.matrix_rank(design / np.where(scale == 0, 1, scale)) < n_par:
        raise FitError(f"underdetermined fit: {len(z_grid)} grid points cannot fix {n_par} "
                       "linear and quadratic coefficients")
    scaled = design / scale
    cond = np.linalg.cond(scaled)
    if cond > cond_limit:
        raise FitError(f"ill-conditioned fit (condition number {cond:.2e})")
    h = np.array([network_hamiltonian(spec, params, z) for z in z_grid])
    coef, *_ = np.linalg.lstsq(scaled, h, rcond=None)
    coef = coef / scale
    omega = coef[:m]
    chi = np.zeros((m, m))
    for c, (j, k) in zip(coef[m:], pairs):
        if j == k:
            chi[j, j] = c
        else:
            chi[j, k] = chi[k, j] = c / 2
    resid = h - design @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))
    span = float(np.max(np.abs(h))) or 1.0
    return ClassicalHamiltonianFit(omega, chi, rms, rms / span, len(z_grid))


@dataclass
class SelectivityEntry:
    target: tuple[int, int]
    chi_target: float
    worst_offtarget: float
    ratio: float
    passed: bool
    chi: list[list[float]]


@dataclass
class SelectivityReport:
    entries: list[SelectivityEntry]
    threshold: float
    schedule: dict

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_ratio(self) -> float:
        return max(e.ratio for e in self.entries)

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "schedule": self.schedule,
                "all_passed": self.all_passed, "max_ratio": self.max_ratio,
                "entries": [asdict(e) for e in self.entries]}


def offtarget_ratio(chi: np.ndarray, target: tuple[int, int]) -> tuple[float, float, float]:
    """(|chi_jk|, worst off-target |chi_mn|, ratio); modes are 1-based."""
    j, k = target[0] - 1, target[1] - 1
    allowed = {(j, j), (k, k), (j, k), (k, j)}
    m = chi.shape[0]
    worst = max((abs(chi[a, b]) for a in range(m) for b in range(m) if (a, b) not in allowed),
                default=0.0)
    main = abs(chi[j, k])
    return main, worst, (worst / main if main else math.inf)


def pair_selectivity_report(spec: NetworkSpec, params: PhysicalParams,
                            targets: Sequence[tuple[int, int]] | None = None,
                            near_ldk: float = 0.02, far_2ldk: float = 10.0,
                            near_resonant_all: bool = False,
                            threshold: float = SELECTIVITY_THRESHOLD,
                            z_levels: int = 3) -> SelectivityReport:
    """Detuning schedule per target pair and the resulting off-target suppression.

    Target cavities get L dk = near_ldk * T, all others 2 L dk = far_2ldk * T.
    The fit grid spans |phi_j| <= 1% of the near-resonant L dk.
    """
    m = spec.n_modes
    cav = spec.cavities
    if targets is None:
        targets = list(itertools.combinations(range(1, m + 1), 2))
    dphi = abs(phase_per_atom(params))
    entries = []
    for target in targets:
        dks = []
        for c in cav:
            near = near_resonant_all or c.mode in target
            dks.append(near_ldk * c.T / c.L if near else far_2ldk * c.T / (2 * c.L))
        s = spec.with_detunings(dks)
        zmax = 0.01 * near_ldk * min(c.T for c in cav) / (2 * dphi)
        grid = product_grid(np.linspace(-zmax, zmax, z_levels), m)
        fit = effective_classical_hamiltonian(s, grid, params)
        main, worst, ratio = offtarget_ratio(fit.chi, target)
        entries.append(SelectivityEntry(tuple(target), float(fit.chi[target[0] - 1, target[1] - 1]),
                                        worst, ratio, bool(ratio < threshold),
                                        fit.chi.tolist()))
    schedule = {"near_ldk_over_T": near_ldk, "far_2ldk_over_T": far_2ldk,
                "near_resonant_all": near_resonant_all,
                "note": "selectivity threshold is a reporting default, not a physical bound"}
    return SelectivityReport(entries, threshold, schedule)
