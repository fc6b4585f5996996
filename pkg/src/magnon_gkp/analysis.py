"""Figures of merit for magnon states: Wigner functions, stabilizers, logical tomography."""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import hilbert as hb
from .protocol import LOGICAL_DISPLACEMENTS, STABILIZERS, TARGETS, required_dim

WIGNER_CONVENTION = "hbar=1; q=(m+m^dag)/sqrt2; W_vac(0,0)=1/pi; integral 1"
GRID_EXTENT = 6.0
GRID_POINTS = 161
SUPPORT_TOL = 1e-15

_S = 1 / math.sqrt(2)
LOGICAL_KETS = {
    "0_L": np.array([1, 0], dtype=complex),
    "1_L": np.array([0, 1], dtype=complex),
    "+_L": np.array([_S, _S], dtype=complex),
    "-_L": np.array([_S, -_S], dtype=complex),
    "phi+_L": np.array([_S, 1j * _S], dtype=complex),
    "phi-_L": np.array([_S, -1j * _S], dtype=complex),
}
_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _magnon_density(state: hb.State) -> np.ndarray:
    """Magnon density matrix trimmed to its support."""
    state = hb.magnon_part(state)
    n = hb.support_dim(state, tol=SUPPORT_TOL)
    state = hb.resize(state, min(n, state.space_dims[0]))
    if isinstance(state, hb.HybridState):
        return np.outer(state.amplitudes, state.amplitudes.conj())
    return np.array(state.matrix)


# ---------------------------------------------------------------------------
# Wigner function

@dataclass(frozen=True, eq=False)
class WignerGrid:
    q: np.ndarray
    p: np.ndarray
    values: np.ndarray  # values[i, j] = W(q[j], p[i])
    convention: str = WIGNER_CONVENTION

    @property
    def dq(self) -> float:
        return float(self.q[1] - self.q[0]) if self.q.size > 1 else 1.0

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0]) if self.p.size > 1 else 1.0

    def integral(self) -> float:
        return float(np.sum(self.values) * self.dq * self.dp)

    def at(self, q: float, p: float) -> float:
        return float(self.values[np.argmin(np.abs(self.p - p)), np.argmin(np.abs(self.q - q))])


def hermite_functions(n: int, x: np.ndarray) -> np.ndarray:
    """Oscillator eigenfunctions psi_0..psi_{n-1} at points x (rows = levels).

    Uses the normalized three-term recurrence with running rescaling so that
    the Gaussian prefactor never underflows before the polynomial grows.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n, x.size))
    log_scale = -x * x / 2 - 0.25 * math.log(math.pi)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    for k in range(n):
        out[k] = cur * np.exp(log_scale)
        nxt = math.sqrt(2 / (k + 1)) * x * cur - math.sqrt(k / (k + 1)) * prev
        prev, cur = cur, nxt
        big = np.maximum(np.abs(cur), np.abs(prev))
        rescale = big > 1e100
        if np.any(rescale):
            f = np.where(rescale, big, 1.0)
            cur = cur / f
            prev = prev / f
            log_scale = log_scale + np.log(f)
    return out


def default_axes(extent: float = GRID_EXTENT, points: int = GRID_POINTS):
    ax = np.linspace(-extent, extent, points)
    return ax, ax.copy()


def _position_kernel(rho: np.ndarray, x: np.ndarray) -> np.ndarray:
    """rho(x_a, x_b) on a lattice."""
    phi = hermite_functions(rho.shape[0], x)
    return phi.T @ rho @ phi


def _wigner_rows(kernel: np.ndarray, centres: np.ndarray, phases: np.ndarray, h: float) -> np.ndarray:
    size = kernel.shape[0]
    kmax = (phases.shape[0] - 1) // 2
    ks = np.arange(-kmax, kmax + 1)
    rows = np.zeros((centres.size, ks.size), dtype=complex)
    for j, c in enumerate(centres):
        a, b = c - ks, c + ks
        ok = (a >= 0) & (a < size) & (b >= 0) & (b < size)
        rows[j, ok] = kernel[a[ok], b[ok]]
    return np.real(rows @ phases) * h / math.pi


def wigner(state: hb.State, q=None, p=None, jobs: int = 1, step: float = 0.05) -> WignerGrid:
    """Wigner function of the magnon (qubit traced out) on a (q, p) grid.

    W(q, p) = (1/pi) int dy <q - y|rho|q + y> e^{2 i p y}, with the position
    kernel built from oscillator eigenfunctions on a lattice of spacing at
    most ``step`` that contains every q sample. ``q`` must be evenly spaced.
    Rows are split over ``jobs`` threads writing disjoint output blocks.
    """
    if q is None or p is None:
        dq_, dp_ = default_axes()
        q = dq_ if q is None else q
        p = dp_ if p is None else p
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if q.size > 1:
        dq = np.diff(q)
        if not np.allclose(dq, dq[0], rtol=1e-9, atol=0) or dq[0] <= 0:
            raise ValueError("q axis must be increasing and evenly spaced")
        sub = max(1, math.ceil(dq[0] / step - 1e-9))
        h = dq[0] / sub
    else:
        sub, h = 1, step
    full = state.space_dims[0]
    limit = math.sqrt(2 * full + 1)
    if max(np.max(np.abs(q)), np.max(np.abs(p))) > limit:
        warnings.warn(f"grid extends beyond |q|,|p| ~ {limit:.2f} reachable with {full} levels",
                      hb.TruncationWarning, stacklevel=2)
    rho = _magnon_density(state)
    edge = math.sqrt(2 * rho.shape[0] + 1) + 8.0
    lo = math.floor((min(-edge, q[0]) - q[0]) / h)
    hi = math.ceil((max(edge, q[-1]) - q[0]) / h)
    lattice = q[0] + h * np.arange(lo, hi + 1)
    kernel = _position_kernel(rho, lattice)
    centres = -lo + sub * np.arange(q.size)
    kmax = lattice.size
    phases = np.exp(2j * np.outer(h * np.arange(-kmax, kmax + 1), p))
    jobs = max(1, int(jobs))
    if jobs == 1 or q.size < 2 * jobs:
        cols = _wigner_rows(kernel, centres, phases, h)
    else:
        chunks = np.array_split(np.arange(q.size), jobs)
        cols = np.empty((q.size, p.size))
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [(idx, pool.submit(_wigner_rows, kernel, centres[idx], phases, h))
                       for idx in chunks]
            for idx, fut in futures:
                cols[idx] = fut.result()
    return WignerGrid(q, p, cols.T.copy())


def wigner_parity(state: hb.State, q: float, p: float) -> float:
    """Single-point Wigner value from the displaced-parity definition (slow; for checks)."""
    rho = _magnon_density(state)
    beta = (q + 1j * p) / math.sqrt(2)
    dim = max(rho.shape[0], required_dim(hb.DensityState(rho, (rho.shape[0],)), abs(beta)))
    big = np.zeros((dim, dim), dtype=complex)
    n0 = rho.shape[0]
    big[:n0, :n0] = rho
    d = hb.displacement(dim, -beta).matrix
    shifted = d @ big @ d.conj().T
    parity = (-1.0) ** np.arange(dim)
    return float(1 / math.pi * np.real(np.sum(parity * np.diagonal(shifted))))


def marginals(grid: WignerGrid) -> tuple[np.ndarray, np.ndarray]:
    """(P(q), P(p)) by integrating out the other quadrature."""
    return grid.values.sum(axis=0) * grid.dp, grid.values.sum(axis=1) * grid.dq


def find_peaks(values: np.ndarray, rel_height: float = 0.1) -> np.ndarray:
    """Indices of strict local maxima higher than ``rel_height`` times the global maximum."""
    v = np.asarray(values)
    inner = (v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:]) & (v[1:-1] > rel_height * v.max())
    return np.nonzero(inner)[0] + 1


# ---------------------------------------------------------------------------
# displacement expectations

def displacement_expectation(state: hb.State, alpha: complex) -> complex:
    """<D(alpha)> of the magnon, padding the truncation so D is accurate on the state."""
    alpha = complex(alpha)
    if alpha == 0:
        return complex(np.trace(_magnon_density(state)))
    rho = _magnon_density(state)
    n0 = rho.shape[0]
    dim = max(n0, required_dim(hb.DensityState(rho, (n0,)), abs(alpha)))
    d = hb.displacement(dim, alpha).matrix[:n0, :n0]
    return complex(np.einsum("ij,ji->", rho, d))


def delta_from_expectation(mag: float) -> float:
    mag = abs(mag)
    if mag >= 1:
        return 0.0
    if mag == 0:
        return math.inf
    return math.sqrt(-math.log(mag ** 2) / (2 * math.pi))


def db_from_expectation(mag: float) -> float:
    delta = delta_from_expectation(mag)
    if delta == 0:
        return math.inf
    if math.isinf(delta):
        return -math.inf
    return -10 * math.log10(delta ** 2)


@dataclass(frozen=True)
class SqueezingReport:
    exp_SX: complex
    exp_SZ: complex
    delta_X: float
    delta_Z: float
    dB_X: float
    dB_Z: float

    @classmethod
    def from_expectations(cls, sx: complex, sz: complex) -> SqueezingReport:
        return cls(complex(sx), complex(sz), delta_from_expectation(abs(sx)),
                   delta_from_expectation(abs(sz)), db_from_expectation(abs(sx)),
                   db_from_expectation(abs(sz)))

    def to_dict(self) -> dict:
        return {
            "exp_SX": [self.exp_SX.real, self.exp_SX.imag],
            "exp_SZ": [self.exp_SZ.real, self.exp_SZ.imag],
            "abs_SX": abs(self.exp_SX),
            "abs_SZ": abs(self.exp_SZ),
            "delta_X": self.delta_X,
            "delta_Z": self.delta_Z,
            "dB_X": self.dB_X,
            "dB_Z": self.dB_Z,
        }


def effective_squeezing(state: hb.State) -> SqueezingReport:
    return SqueezingReport.from_expectations(
        displacement_expectation(state, STABILIZERS["X"]),
        displacement_expectation(state, STABILIZERS["Z"]),
    )


# ---------------------------------------------------------------------------
# logical tomography

@dataclass(frozen=True, eq=False)
class LogicalTomography:
    exp_X: float
    exp_Y: float
    exp_Z: float
    raw: dict  # Pauli -> complex <D(half-lattice)>
    rho_L: np.ndarray
    min_eig_unclamped: float
    fidelities: dict

    @property
    def bloch(self) -> np.ndarray:
        return np.array([self.exp_X, self.exp_Y, self.exp_Z])

    def to_dict(self) -> dict:
        return {
            "exp_X": self.exp_X, "exp_Y": self.exp_Y, "exp_Z": self.exp_Z,
            "raw": {k: [v.real, v.imag] for k, v in self.raw.items()},
            "rho_L": [[[z.real, z.imag] for z in row] for row in self.rho_L],
            "min_eig_unclamped": self.min_eig_unclamped,
            "fidelities": dict(self.fidelities),
        }


def _rho_from_bloch(x, y, z) -> np.ndarray:
    return 0.5 * (np.eye(2) + x * _PAULI["X"] + y * _PAULI["Y"] + z * _PAULI["Z"])


def logical_tomography(state: hb.State) -> LogicalTomography:
    """Logical density matrix from Re<D> of the half-lattice displacements (lab frame)."""
    raw = {k: displacement_expectation(state, a) for k, a in LOGICAL_DISPLACEMENTS.items()}
    unclamped = [raw[k].real for k in "XYZ"]
    x, y, z = (float(np.clip(v, -1, 1)) for v in unclamped)
    rho_l = _rho_from_bloch(x, y, z)
    fids = {t: float(np.real(np.vdot(k, rho_l @ k))) for t, k in LOGICAL_KETS.items()}
    return LogicalTomography(
        exp_X=x, exp_Y=y, exp_Z=z, raw=raw, rho_L=rho_l,
        min_eig_unclamped=float(np.linalg.eigvalsh(_rho_from_bloch(*unclamped))[0]),
        fidelities=fids,
    )


@dataclass
class SixStateSummary:
    fidelities: dict  # target -> F against its own ideal logical state
    tomography: dict
    squeezing: dict
    mean_fidelity: float
    mean_abs_SX: float
    mean_abs_SZ: float
    dB_X: float
    dB_Z: float

    def to_dict(self) -> dict:
        return {
            "mean_fidelity": self.mean_fidelity,
            "mean_abs_SX": self.mean_abs_SX,
            "mean_abs_SZ": self.mean_abs_SZ,
            "dB_X": self.dB_X,
            "dB_Z": self.dB_Z,
            "fidelities": dict(self.fidelities),
            "tomography": {k: v.to_dict() for k, v in self.tomography.items()},
            "squeezing": {k: v.to_dict() for k, v in self.squeezing.items()},
        }


def six_state_summary(states: Mapping[str, hb.State]) -> SixStateSummary:
    """Average fidelity and stabilizer magnitudes over lab-frame logical states.

    Stabilizer magnitudes are averaged per state (mean of |<S_j>|) and the dB
    figures are computed from those means.
    """
    missing = [t for t in TARGETS if t not in states]
    if missing:
        raise ValueError(f"missing logical states: {missing}")
    tomo = {t: logical_tomography(states[t]) for t in TARGETS}
    sq = {t: effective_squeezing(states[t]) for t in TARGETS}
    fids = {t: tomo[t].fidelities[t] for t in TARGETS}
    sx = float(np.mean([abs(sq[t].exp_SX) for t in TARGETS]))
    sz = float(np.mean([abs(sq[t].exp_SZ) for t in TARGETS]))
    return SixStateSummary(
        fidelities=fids, tomography=tomo, squeezing=sq,
        mean_fidelity=float(np.mean(list(fids.values()))),
        mean_abs_SX=sx, mean_abs_SZ=sz,
        dB_X=db_from_expectation(sx), dB_Z=db_from_expectation(sz),
    )


# ---------------------------------------------------------------------------
# export

def jsonable(obj):
    """Recursively convert numpy/complex/non-finite values for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [jsonable(float(obj.real)), jsonable(float(obj.imag))]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        if math.isnan(val):
            return "nan"
        if math.isinf(val):
            return "inf" if val > 0 else "-inf"
        return val
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(jsonable(obj), indent=2, allow_nan=False) + "\n")
    return path


def grid_to_csv(grid: WignerGrid, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "p", "W"])
        for i, pv in enumerate(grid.p):
            for j, qv in enumerate(grid.q):
                w.writerow([repr(float(qv)), repr(float(pv)), repr(float(grid.values[i, j]))])
    return path


def grid_to_json(grid: WignerGrid, path) -> Path:
    return write_json({"convention": grid.convention, "q": grid.q, "p": grid.p,
                       "shape": list(grid.values.shape), "values": grid.values.ravel()}, path)


def marginals_to_csv(grid: WignerGrid, path) -> Path:
    pq, pp = marginals(grid)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "P_q", "P_p"])
        if grid.q.size == grid.p.size and np.allclose(grid.q, grid.p):
            for x, a, b in zip(grid.q, pq, pp):
                w.writerow([repr(float(x)), repr(float(a)), repr(float(b))])
        else:
            for x, a in zip(grid.q, pq):
                w.writerow([repr(float(x)), repr(float(a)), ""])
            for x, b in zip(grid.p, pp):
                w.writerow([repr(float(x)), "", repr(float(b))])
    return path
