"""Experiment drivers: validated configs, result tables and the reproductions.

Every driver returns ``ResultTable`` objects (CSV data with unit-suffixed
headers plus a JSON metadata block). Assumed parameters that are not part
of the published parameter sets are echoed under ``metadata["assumptions"]``.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .compiler import (Linear, Pair, PulseSequence, cubic_identity_sides,
                       fidelity, group_commutator_gadget, materialize, max_norm, qnd_four_step,
                       qnd_segment_sum, sequence_to_unitary, trotter_compose)
from .network import (NetworkSpec, effective_classical_hamiltonian, pair_selectivity_report,
                      product_grid)
from .optics import (PhysicalParams, intracavity_powers, pair_hamiltonian, phase_per_atom)
from .spin import (SpinSystem, build_collective_ops, casimir_check, coherent_state, commutator,
                   random_state)

DEFAULT_SEED = 42
RB_LINEWIDTH_RATIO = 6.06 / 3400  # Gamma / Delta for Rb, 6.06 MHz over a 3.4 GHz detuning
FLAT_OVERLAP_TOL = 0.02
FIG2_QND_CONFIGS = ((1, 1, 1), (-1, 1, -1), (-1, -1, 1), (1, -1, -1))


class ConfigError(ValueError):
    """Missing, unknown or malformed configuration entries (exit code 2)."""


class ValidityError(RuntimeError):
    """A numerical-validity check failed (exit code 3)."""


# -- result tables ---------------------------------------------------------------

@dataclass
class ResultTable:
    """Rectangular numeric table; headers carry units as ``name[unit]``."""

    columns: list[str]
    data: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = list(self.columns)
        self.data = np.asarray(self.data, dtype=float).reshape(-1, len(self.columns))
        for c in self.columns:
            if "," in c or "[" not in c or not c.endswith("]"):
                raise ValueError(f"column {c!r} must look like name[unit] without commas")

    def __len__(self):
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        """Column by full header or by its name without the unit."""
        for i, c in enumerate(self.columns):
            if c == name or c.split("[")[0] == name:
                return self.data[:, i]
        raise KeyError(name)

    def write(self, path: str | Path) -> tuple[Path, Path]:
        """CSV at ``path`` and metadata JSON next to it; round-trips exactly."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, self.data, delimiter=",", header=",".join(self.columns), comments="",
                   fmt="%.17g")
        meta = path.with_suffix(".json")
        meta.write_text(json.dumps(self.metadata, indent=2, sort_keys=True, default=_jsonable))
        return path, meta

    @classmethod
    def read(cls, path: str | Path) -> "ResultTable":
        path = Path(path)
        with path.open() as fh:
            header = fh.readline().strip()
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        columns = header.split(",")
        if data.size == 0:
            data = np.zeros((0, len(columns)))
        meta_path = path.with_suffix(".json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(columns, data, meta)

    def to_csv_text(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(f"{v:.17g}" for v in row) for row in self.data]
        return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# -- configuration -----------------------------------------------------------

FIG2_CAPTION_KEYS = ("w_over_lambda", "T", "eps", "L", "P0")

# experiment -> (required keys, defaults for optional keys)
EXPERIMENTS: dict[str, tuple[tuple[str, ...], dict[str, Any]]] = {
    "fig2": (FIG2_CAPTION_KEYS, {
        "wavelength": 780e-9, "T_B": 0.5, "linewidth_ratio": RB_LINEWIDTH_RATIO,
        "z_max": 3000.0, "z_points": 61, "inset_lines": 9, "inset_points": 61,
        "ldk_over_T": [0.08, 0.5], "form": "lorentzian", "seed": DEFAULT_SEED}),
    "overlap": ((), {
        "N_values": [50, 100, 200, 500], "xi_values": [2.0, 4.0, 6.0], "t_points": 40,
        "t_values": None, "seed": DEFAULT_SEED, "workers": 4}),
    "squeeze": ((), {
        "N": 100, "protocols": ["OAT", "TACT"], "t_max": None, "t_points": 81,
        "seed": DEFAULT_SEED}),
    "info": ((), {"N": None, "r": None, "sq": None}),
    "compiler": ((), {
        "identity_N": [1, 6, 10, 20, 40], "pair_N": [1, 2, 6, 10], "gadget_N": 6,
        "gadget_dt": [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1], "trotter_N": 4,
        "trotter_n": [4, 8, 16, 32, 64], "qnd_N": 10, "qnd_chi_tau": [1e-4, 1e-3, 1e-2, 1e-1],
        "n_states": 10, "seed": DEFAULT_SEED}),
    "network": ((), {
        "w_over_lambda": 100.0, "linewidth_ratio": RB_LINEWIDTH_RATIO, "P0": 12e-9,
        "wavelength": 780e-9, "points": [], "z_levels": 3, "z_span": 0.01,
        "selectivity": None, "seed": DEFAULT_SEED}),
}

ASSUMPTION_NOTES = {
    "T_B": "beam-splitter transmissivity is not part of the cavity parameter set; balanced split assumed",
    "linewidth_ratio": "Gamma/Delta for Rb (6.06 MHz natural linewidth, 3.4 GHz detuning) assumed",
    "wavelength": "Rb D2 wavelength assumed to convert input power to photon rate",
    "form": "intracavity powers from the Lorentzian cavity response with the full interferometer",
}

TOP_LEVEL_KEYS = {"experiment", "params", "output", "format"}
FORMATS = ("csv", "json")


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    output: str | None = None
    format: str = "csv"

    @classmethod
    def from_dict(cls, data: dict, experiment: str | None = None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - TOP_LEVEL_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        name = data.get("experiment", experiment)
        if experiment is not None and name != experiment:
            raise ConfigError(f"config is for {name!r}, not {experiment!r}")
        if name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params must be an object")
        required, defaults = EXPERIMENTS[name]
        unknown = set(params) - set(required) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown {name} parameters: {sorted(unknown)}")
        missing = [k for k in required if k not in params]
        if missing:
            raise ConfigError(f"{name} config is missing required parameters: {missing}")
        fmt = data.get("format", "csv")
        if fmt not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        return cls(name, {**defaults, **params}, data.get("output"), fmt)

    @classmethod
    def load(cls, path: str | Path, experiment: str | None = None) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data, experiment)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "params": self.params, "output": self.output,
                "format": self.format}


def _as_config(config, experiment: str) -> ExperimentConfig:
    if isinstance(config, ExperimentConfig):
        if config.experiment != experiment:
            raise ConfigError(f"config is for {config.experiment!r}, not {experiment!r}")
        return config
    if config is None:
        config = {}
    if isinstance(config, dict) and "params" not in config and "experiment" not in config:
        config = {"params": config}
    return ExperimentConfig.from_dict(config, experiment)


def _metadata(cfg: ExperimentConfig, **extra) -> dict:
    meta = {"experiment": cfg.experiment, "config": cfg.to_dict(), "tool_version": __version__,
            "seed": cfg.params.get("seed", DEFAULT_SEED)}
    meta.update(extra)
    return meta


def _positive(p: dict, *keys):
    for k in keys:
        v = p[k]
        if not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
            raise ConfigError(f"{k} must be a positive number, got {v!r}")


# -- pair power map and four-step inset -------------------------------------------

def fig2_params(p: dict, ldk_over_T: float) -> PhysicalParams:
    try:
        base = PhysicalParams(wavelength_ratio=1 / p["w_over_lambda"],
                              linewidth_ratio=p["linewidth_ratio"], T=p["T"], eps=p["eps"],
                              L=p["L"], T_B=p["T_B"], input_power=p["P0"],
                              wavelength=p["wavelength"])
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad fig2 parameters: {exc}") from None
    return base.with_(dk=ldk_over_T * base.T / base.L)


def four_step_hamiltonian(params: PhysicalParams, z1, z2, form: str = "lorentzian"):
    """Classical H_eff = (1/4) sum_k H(s1 Z1, s2 Z2; sigma dk) of the four-step sequence."""
    total = 0.0
    for s1, s2, sigma in FIG2_QND_CONFIGS:
        seg = params.with_(dk=sigma * params.dk)
        total = total + pair_hamiltonian(seg, s1 * np.asarray(z1), s2 * np.asarray(z2), form)
    return total / 4


def linearity_residual(z1: np.ndarray, lines: Sequence[np.ndarray]) -> float:
    """Worst deviation of each line from its straight-line fit, over the total range."""
    values = np.concatenate(lines)
    span = float(np.ptp(values))
    if span == 0:
        return 0.0
    worst = 0.0
    for h in lines:
        fit = np.polyval(np.polyfit(z1, h, 1), z1)
        worst = max(worst, float(np.max(np.abs(h - fit))))
    return worst / span


def run_fig2(config=None) -> tuple[ResultTable, ResultTable]:
    """Power map P1, P2 over (Z1, Z2) and the four-step inset lines.

    Returns (power table, inset table). The inset metadata carries the
    linearity residual per L dk / T and the slope-versus-Z2 fit.
    """
    cfg = _as_config(config, "fig2")
    p = cfg.params
    _positive(p, "w_over_lambda", "T", "L", "P0", "z_max", "wavelength")
    zmax = float(p["z_max"])
    z = np.linspace(-zmax, zmax, int(p["z_points"]))
    z1g, z2g = np.meshgrid(z, z, indexing="ij")
    z1l = np.linspace(-zmax, zmax, int(p["inset_points"]))
    z2l = np.linspace(-zmax, zmax, int(p["inset_lines"]))
    assumptions = {k: {"value": p[k], "note": ASSUMPTION_NOTES[k]}
                   for k in ("T_B", "linewidth_ratio", "wavelength", "form")}

    power_rows, inset_rows, per_ldk = [], [], {}
    for ldk in p["ldk_over_T"]:
        params = fig2_params(p, ldk)
        pw = intracavity_powers(params, z1g, z2g, p["form"])
        base = intracavity_powers(params, 0.0, 0.0, p["form"])
        power_rows.append(np.column_stack([np.full(z1g.size, ldk), z1g.ravel(), z2g.ravel(),
                                           np.ravel(pw.P1), np.ravel(pw.P2)]))
        lines = []
        for z2v in z2l:
            h = four_step_hamiltonian(params, z1l, np.full_like(z1l, z2v), p["form"])
            lines.append(h)
            inset_rows.append(np.column_stack([np.full(z1l.size, ldk), np.full(z1l.size, z2v), z1l, h]))
        slopes = np.array([np.polyfit(z1l, h, 1)[0] for h in lines])
        bilinear = np.polyfit(z2l, slopes, 1)
        per_ldk[str(ldk)] = {
            "linearity_residual": linearity_residual(z1l, lines),
            "slope_per_Z2": float(bilinear[0]),
            "slope_offset": float(bilinear[1]),
            "baseline_P1_W": float(base.P1), "baseline_P2_W": float(base.P2),
            "form_valid": bool(pw.valid),
            "phase_per_atom": phase_per_atom(params),
        }
    meta = _metadata(cfg, assumptions=assumptions, inset=per_ldk)
    keys = [str(v) for v in p["ldk_over_T"]]
    if len(keys) >= 2:
        res = [per_ldk[k]["linearity_residual"] for k in keys]
        meta["residual_ratio_first_to_last"] = res[0] / res[-1] if res[-1] else math.inf
    power = ResultTable(["LdK_over_T[1]", "Z1[1]", "Z2[1]", "P1[W]", "P2[W]"],
                        np.vstack(power_rows), dict(meta, table="power"))
    inset = ResultTable(["LdK_over_T[1]", "Z2[1]", "Z1[1]", "H_eff[rad/s]"],
                        np.vstack(inset_rows), dict(meta, table="inset"))
    return power, inset


# -- overlap study ------------------------------------------------------------------

def _tact_spectrum(n: int):
    _, y, z = build_collective_ops(n)
    h = (y @ z + z @ y).dense()
    w, v = np.linalg.eigh(h)
    return w, v, np.diag(z.dense()).real, y.dense()


def overlap_rows(n: int, xi_values: Sequence[float], t_values: Sequence[float]) -> np.ndarray:
    """Rows (N, xi, t, r, phi, overlap, flat) for one atom number."""
    w, v, m, ydense = _tact_spectrum(n)
    psi0 = coherent_state(n, np.pi / 2, 0.0).vector
    c0 = v.conj().T @ psi0
    rows, truncated = [], 0
    for t in t_values:
        psi1 = v @ (np.exp(-1j * w * t) * c0)
        p = np.abs(psi1) ** 2
        dn_plus = math.sqrt(float(np.dot(p, m ** 2)))
        dn_minus = math.sqrt(float(np.real(np.vdot(psi1, ydense @ (ydense @ psi1)))))
        r = 2 * dn_plus / n
        if r > 1:
            truncated += 1
            continue
        for xi in xi_values:
            phi = 2 * xi * dn_minus / n
            # <psi1| e^{i Z phi} |psi1> is a weighted sum of phases
            ov = abs(np.dot(p, np.exp(1j * phi * m))) ** 2
            rows.append((n, xi, t, r, phi, ov, math.exp(-xi ** 2 / 4)))
    if truncated:
        warnings.warn(f"N={n}: {truncated} time points with r > 1 dropped", RuntimeWarning)
    return np.array(rows, dtype=float).reshape(-1, 7)


def default_overlap_times(n: int, points: int) -> np.ndarray:
    # r grows roughly as e^{N t} / sqrt(N) and saturates near 0.8, where the
    # distribution wraps the sphere; the default range ends just past that maximum
    nt_max = 0.5 * math.log(n) + 1.5
    return np.linspace(0.0, nt_max / n, points)


def run_overlap_study(config=None) -> ResultTable:
    cfg = _as_config(config, "overlap")
    p = cfg.params
    ns = [int(n) for n in p["N_values"]]
    if any(n < 1 for n in ns):
        raise ConfigError("N_values must be positive integers")
    xis = [float(x) for x in p["xi_values"]]

    def one(n):
        ts = p["t_values"] if p["t_values"] is not None else default_overlap_times(n, int(p["t_points"]))
        return overlap_rows(n, xis, ts)

    # grid points in parallel, assembly in the configured order
    with ThreadPoolExecutor(max_workers=max(1, int(p["workers"]))) as pool:
        blocks = list(pool.map(one, ns))
    data = np.vstack(blocks) if blocks else np.zeros((0, 7))
    summary = overlap_summary(data)
    meta = _metadata(cfg, summary=summary, flat_tolerance=FLAT_OVERLAP_TOL,
                     assumptions={"psi0": "equatorial coherent state with <X> = -N/2"})
    return ResultTable(["N[1]", "xi[1]", "t[1]", "r[1]", "phi[rad]", "overlap[1]", "flat[1]"], data, meta)


def overlap_summary(data: np.ndarray, r_small: float = 0.05, n_min: int = 100,
                    near_max: float = 0.9) -> dict:
    """Flat-space agreement at small r and the deviation at the largest r reached.

    TACT never spreads the state to r = 1; the large-r regime is taken as the
    rows with r >= ``near_max`` times the maximum r reached for that N.
    """
    n, xi, r, ov, flat = data[:, 0], data[:, 1], data[:, 3], data[:, 5], data[:, 6]
    dev = np.abs(ov - flat)
    small = (r <= r_small) & (n >= n_min)
    out = {"small_r_points": int(small.sum()),
           "small_r_max_deviation": float(dev[small].max()) if small.any() else None,
           "large_r": {}}
    for nv in np.unique(n):
        rows = n == nv
        rmax = float(r[rows].max())
        large = rows & (r >= near_max * rmax)
        k = np.argmax(np.where(large, dev, -1.0))
        out["large_r"][str(int(nv))] = {"max_r": rmax, "max_deviation": float(dev[k]),
                                        "worst_xi": float(xi[k])}
    vals = [v["max_deviation"] for v in out["large_r"].values()]
    out["large_r_min_over_N"] = min(vals) if vals else None
    return out


# -- information content -------------------------------------------------------------

def run_info_content(n: float | None = None, r: float | None = None, sq: float | None = None) -> dict:
    """Distinguishable states and qubit equivalents from (N, r) or from Sq in dB.

    With (N, r) the squeezed variance follows from a minimum-uncertainty
    state, Dn-^2 = 1 / (4 r^2), so Sq = -10 log10(r^2 N). With Sq alone,
    N_bits = -Sq / (10 log10 2); an accompanying N adds the total-space
    qubit count log2 N.
    """
    if sq is not None and r is not None:
        raise ConfigError("give either (N, r) or Sq, not both")
    if sq is None and (n is None or r is None):
        raise ConfigError("need both N and r, or Sq")
    report: dict[str, Any] = {"tool_version": __version__}
    if n is not None:
        if not n > 0:
            raise ConfigError("N must be positive")
        report["N"] = n
        report["total_space_qubits"] = math.log2(n)
    if sq is not None:
        if not math.isfinite(sq):
            raise ConfigError("Sq must be finite")
        report["Sq_dB"] = sq
        report["N_bits"] = -sq / (10 * math.log10(2))
        report["valid"] = True
        return report
    if not 0 < r <= 1:
        raise ConfigError("r must lie in (0, 1]")
    states = r ** 2 * n
    report.update(r=r, states=states, valid=states >= 1)
    if states >= 1:
        report["qubits"] = math.log2(states)
    else:
        report["qubits"] = None
        report["warning"] = "r^2 N < 1: fewer than one distinguishable state"
    sq_db = -10 * math.log10(states)
    report["Sq_dB"] = sq_db
    report["N_bits"] = -sq_db / (10 * math.log10(2))
    return report


# -- squeezing protocols ---------------------------------------------------------------

PROTOCOLS = {"OAT": "ZZ", "TACT": "YZ + ZY"}


def min_transverse_variance(psi: np.ndarray, ops) -> float:
    """Smallest variance of n.J over unit n orthogonal to the mean spin."""
    vecs = [o @ psi for o in ops]
    mean = np.array([np.vdot(psi, v).real for v in vecs])
    cov = np.empty((3, 3))
    for i in range(3):
        for k in range(i, 3):
            cov[i, k] = cov[k, i] = np.vdot(vecs[i], vecs[k]).real - mean[i] * mean[k]
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        return float(np.linalg.eigvalsh(cov)[0])
    e = mean / norm
    a = np.cross(e, [1.0, 0, 0] if abs(e[0]) < 0.9 else [0, 1.0, 0])
    a /= np.linalg.norm(a)
    b = np.cross(e, a)
    basis = np.stack([a, b])
    return float(np.linalg.eigvalsh(basis @ cov @ basis.T)[0])


def squeeze_curve(n: int, protocol: str, t_values: Sequence[float]) -> np.ndarray:
    """Minimal transverse variance at each time, starting from the equatorial state."""
    if protocol not in PROTOCOLS:
        raise ConfigError(f"protocol must be one of {sorted(PROTOCOLS)}")
    s = SpinSystem.single(n)
    ops = [o.dense() for o in build_collective_ops(s)]
    w, v = np.linalg.eigh(materialize(PROTOCOLS[protocol], s).dense())
    c0 = v.conj().T @ coherent_state(s, np.pi / 2, 0.0).vector
    return np.array([min_transverse_variance(v @ (np.exp(-1j * w * t) * c0), ops) for t in t_values])


def run_squeeze_protocols(config=None) -> ResultTable:
    cfg = _as_config(config, "squeeze")
    p = cfg.params
    n = int(p["N"])
    if n < 1:
        raise ConfigError("N must be a positive integer")
    protocols = [str(x).upper() for x in p["protocols"]]
    for pr in protocols:
        if pr not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {sorted(PROTOCOLS)}, got {pr!r}")
    t_max = p["t_max"] if p["t_max"] is not None else 2 * n ** (-2 / 3)
    t = np.linspace(0.0, float(t_max), int(p["t_points"]))
    cols, data, summary = ["t[1]"], [t], {}
    for pr in protocols:
        var = squeeze_curve(n, pr, t)
        db = 10 * np.log10(var / (n / 4))
        cols += [f"var_min_{pr}[1]", f"squeezing_{pr}[dB]"]
        data += [var, db]
        k = int(np.argmin(db))
        summary[pr] = {"min_dB": float(db[k]), "t_at_min": float(t[k]), "hamiltonian": PROTOCOLS[pr]}
    meta = _metadata(cfg, summary=summary,
                     assumptions={"initial_state": "equatorial coherent state with <X> = -N/2"})
    return ResultTable(cols, np.column_stack(data), meta)


# -- compiler verification -------------------------------------------------------------

def _slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def run_compiler_verification(config=None) -> dict[str, ResultTable]:
    """Identity residuals, gadget and Trotter convergence, and QND fidelities."""
    cfg = _as_config(config, "compiler")
    p = cfg.params
    rng = np.random.default_rng(int(p["seed"]))
    out = {}

    rows = []
    for n in p["identity_N"]:
        lhs, rhs = cubic_identity_sides(SpinSystem.single(int(n)), "x3")
        rows.append((1, n, 0, max_norm(lhs.dense() - rhs.dense())))
    for n in p["pair_N"]:
        lhs, rhs = cubic_identity_sides(SpinSystem.pair(int(n), int(n)), "x3z")
        rows.append((2, n, n, max_norm(lhs.dense() - rhs.dense())))
    res = np.array(rows, dtype=float)
    out["identities"] = ResultTable(["modes[1]", "N1[1]", "N2[1]", "residual[1]"], res,
                                    _metadata(cfg, table="identities",
                                              max_residual=float(res[:, 3].max()),
                                              passed=bool(res[:, 3].max() < 1e-10)))

    s = SpinSystem.single(int(p["gadget_N"]))
    w, v = np.linalg.eigh(materialize("Z", s).dense())
    dts = np.array(p["gadget_dt"], dtype=float)
    errs = []
    for dt in dts:
        u = sequence_to_unitary(group_commutator_gadget(Linear(1, x=1.0), Linear(1, y=1.0), dt), s)
        exact = (v * np.exp(-1j * w * dt ** 2)) @ v.conj().T
        errs.append(max_norm(u - exact))
    slope = _slope(dts, errs)
    out["gadget"] = ResultTable(["dt[1]", "residual[1]"], np.column_stack([dts, errs]),
                                _metadata(cfg, table="gadget", slope=slope,
                                          passed=bool(abs(slope - 3) < 0.2)))

    s = SpinSystem.single(int(p["trotter_N"]))
    w, v = np.linalg.eigh(materialize("X + Z", s).dense())
    exact = (v * np.exp(-1j * w)) @ v.conj().T
    terms = [PulseSequence.single(Linear(1, x=1.0), 1.0), PulseSequence.single(Linear(1, z=1.0), 1.0)]
    ns = np.array(p["trotter_n"], dtype=float)
    errs = [max_norm(sequence_to_unitary(trotter_compose(terms, int(n)), s) - exact) for n in ns]
    slope = _slope(ns, errs)
    out["trotter"] = ResultTable(["n[1]", "residual[1]"], np.column_stack([ns, errs]),
                                 _metadata(cfg, table="trotter", slope=slope,
                                           passed=bool(abs(slope + 2) < 0.2)))

    total, expected = qnd_segment_sum()
    n = int(p["qnd_N"])
    s = SpinSystem.pair(n, n)
    zz = np.diag(materialize("Z1 Z2", s).dense()).real
    states = [random_state(s, rng).vector for _ in range(int(p["n_states"]))]
    chi = 0.5
    rows = []
    for ct in p["qnd_chi_tau"]:
        tau = ct / chi
        u = sequence_to_unitary(qnd_four_step(Pair((1, 2), 1.0, 0.5, chi), tau), s)
        target = np.diag(np.exp(2j * chi * tau * zz))
        rows.append((ct, fidelity(u, target, states), max_norm(u - target)))
    out["qnd"] = ResultTable(["chi_tau[1]", "fidelity[1]", "residual[1]"], np.array(rows),
                             _metadata(cfg, table="qnd", symbolic_residual=str(total - expected),
                                       symbolic_exact=(total - expected) == 0))
    return out


# -- network sweeps ---------------------------------------------------------------------

def run_network_sweep(spec: NetworkSpec, config=None) -> ResultTable:
    """Quadratic fits of the network Hamiltonian at each detuning point.

    ``points`` lists per-cavity L dk / T values. Rows hold (point, j, k,
    coefficient) with k = 0 for the linear term omega_j and k >= j for
    chi_jk.
    """
    cfg = _as_config(config, "network")
    p = cfg.params
    cav = spec.cavities
    try:
        params = PhysicalParams(wavelength_ratio=1 / p["w_over_lambda"],
                                linewidth_ratio=p["linewidth_ratio"], T=cav[0].T, L=cav[0].L,
                                input_power=p["P0"], wavelength=p["wavelength"])
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad network parameters: {exc}") from None
    dphi = abs(phase_per_atom(params))
    rows = []
    m = spec.n_modes
    for i, point in enumerate(p["points"]):
        if len(point) != len(cav):
            raise ConfigError(f"sweep point {i} needs {len(cav)} detunings")
        dks = [x * c.T / c.L for x, c in zip(point, cav)]
        near = min(abs(x) for x in point) or 1.0
        zmax = p["z_span"] * near * min(c.T for c in cav) / (2 * dphi)
        fit = effective_classical_hamiltonian(spec.with_detunings(dks),
                                              product_grid(np.linspace(-zmax, zmax, int(p["z_levels"])), m),
                                              params)
        for j in range(m):
            rows.append((i, j + 1, 0, fit.omega[j]))
            for k in range(j, m):
                rows.append((i, j + 1, k + 1, fit.chi[j, k]))
    meta = _metadata(cfg, network=spec.name)
    if p["selectivity"] is not None:
        opts = dict(p["selectivity"])
        allowed = {"targets", "near_ldk", "far_2ldk", "threshold", "z_levels"}
        if set(opts) - allowed:
            raise ConfigError(f"unknown selectivity options: {sorted(set(opts) - allowed)}")
        if "targets" in opts:
            opts["targets"] = [tuple(t) for t in opts["targets"]]
        rep = pair_selectivity_report(spec, params, **opts)
        meta["selectivity"] = rep.to_dict()
    return ResultTable(["point[1]", "j[1]", "k[1]", "coefficient[rad/s]"],
                       np.array(rows, dtype=float).reshape(-1, 4), meta)


def ops_check(n: int) -> dict:
    """su(2) and Casimir residuals of the collective operators."""
    x, y, z = build_collective_ops(n)
    res = [max_norm((commutator(a, b) - c * 1j).dense()) for a, b, c in ((x, y, z), (y, z, x), (z, x, y))]
    cas = casimir_check(x, y, z)
    worst = max(res + [cas])
    return {"N": n, "commutator_residuals": res, "casimir_residual": cas, "max_residual": worst,
            "passed": worst < 1e-10, "tool_version": __version__}
