"""Time evolution of the magnon-qubit system.

* closed-form conditional displacement (CD) for pure states,
* fixed-step RK4 integration of the squeezed-frame Lindblad equation,
* the cavity-magnon-qubit Hamiltonians used to cross-check the effective
  CD model at small amplitude.

The dissipator convention is D[o]rho = 2 o rho o^dag - {o^dag o, rho}; a
LindbladModel stores pairs (c, o) contributing c * D[o] rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from . import hilbert as hb
from .params import EffectiveModel

DEFAULT_STEPS_PER_T1 = 2000
FULL_MODEL_DIM_CAP = 4000


class DriftError(RuntimeError):
    """Integrated density matrix drifted out of tolerance or became non-finite."""

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def _pair_dims(space_dims) -> tuple[int, int]:
    if isinstance(space_dims, int):
        return space_dims, 2
    dims = tuple(space_dims)
    if len(dims) != 2 or dims[1] != 2:
        raise hb.DimensionError(f"expected (magnon, qubit) dims, got {dims}")
    return dims[0], 2


# ---------------------------------------------------------------------------
# conditional displacement

def cd_hamiltonian(chi: float, space_dims, axis_phase: float = 0.0) -> hb.Operator:
    """-(chi/2)(e^{i theta} m^dag + e^{-i theta} m) (x) sigma_x."""
    dim, _ = _pair_dims(space_dims)
    m = hb.annihilation(dim).matrix
    quad = np.exp(1j * axis_phase) * m.conj().T + np.exp(-1j * axis_phase) * m
    return hb.Operator(-(chi / 2) * np.kron(quad, hb.sigma_x().matrix), (dim, 2))


_PLUS = np.array([1, 1]) / math.sqrt(2)
_MINUS = np.array([1, -1]) / math.sqrt(2)


def cd_unitary(dim: int, alpha: float, axis_phase: float = 0.0) -> hb.Operator:
    """|+><+| (x) D(i alpha e^{i theta}) + |-><-| (x) D(-i alpha e^{i theta}) in magnon (x) qubit order."""
    beta = 1j * alpha * np.exp(1j * axis_phase)
    d_plus = hb.displacement(dim, beta).matrix
    d_minus = hb.displacement(dim, -beta).matrix
    mat = np.kron(d_plus, np.outer(_PLUS, _PLUS)) + np.kron(d_minus, np.outer(_MINUS, _MINUS))
    return hb.Operator(mat, (dim, 2))


def evolve_pure_cd(state: hb.State, chi: float, t: float, axis_phase: float = 0.0) -> hb.State:
    """Exact evolution under cd_hamiltonian for time t (conditional displacement by chi t / 2)."""
    dim, _ = _pair_dims(state.space_dims)
    alpha = chi * t / 2
    if alpha == 0:
        return state
    if isinstance(state, hb.DensityState):
        u = cd_unitary(dim, alpha, axis_phase).matrix
        return hb.DensityState(u @ state.matrix @ u.conj().T, state.space_dims)
    beta = 1j * alpha * np.exp(1j * axis_phase)
    psi = state.amplitudes.reshape(dim, 2)
    c_plus = (psi[:, 0] + psi[:, 1]) / math.sqrt(2)
    c_minus = (psi[:, 0] - psi[:, 1]) / math.sqrt(2)
    c_plus = hb.displacement(dim, beta).matrix @ c_plus
    c_minus = hb.displacement(dim, -beta).matrix @ c_minus
    out = np.stack([c_plus + c_minus, c_plus - c_minus], axis=1) / math.sqrt(2)
    return hb.HybridState(out.ravel(), state.space_dims)


# ---------------------------------------------------------------------------
# Lindblad dynamics

@dataclass(frozen=True, eq=False)
class LindbladModel:
    hamiltonian: hb.Operator
    dissipators: tuple = ()  # ((coefficient, jump Operator), ...)

    def __post_init__(self):
        dissipators = tuple((float(c), op) for c, op in self.dissipators)
        for c, op in dissipators:
            if c < 0:
                raise ValueError(f"dissipator coefficient must be >= 0, got {c}")
            if op.space_dims != self.hamiltonian.space_dims:
                raise hb.DimensionError(
                    f"jump operator dims {op.space_dims} vs Hamiltonian {self.hamiltonian.space_dims}")
        object.__setattr__(self, "dissipators", dissipators)

    @property
    def space_dims(self) -> tuple[int, ...]:
        return self.hamiltonian.space_dims

    @property
    def is_closed(self) -> bool:
        return all(c == 0 for c, _ in self.dissipators)


def lindblad_rhs(model: LindbladModel, rho: hb.DensityState) -> np.ndarray:
    """d rho / dt as a dense matrix."""
    if rho.space_dims != model.space_dims:
        raise hb.DimensionError(f"{rho.space_dims} vs {model.space_dims}")
    h = model.hamiltonian.matrix
    r = rho.matrix
    out = -1j * (h @ r - r @ h)
    for c, op in model.dissipators:
        if c == 0:
            continue
        o = op.matrix
        od = o.conj().T
        odo = od @ o
        out += c * (2 * o @ r @ od - odo @ r - r @ odo)
    return out


def liouvillian(model: LindbladModel) -> sp.csr_matrix:
    """Sparse superoperator acting on the row-major flattening of rho."""
    n = model.hamiltonian.dim
    h_eff = model.hamiltonian.matrix.astype(complex)
    jumps = []
    for c, op in model.dissipators:
        if c == 0:
            continue
        h_eff = h_eff - 1j * c * (op.matrix.conj().T @ op.matrix)
        jumps.append((c, sp.csr_matrix(op.matrix)))
    h_eff = sp.csr_matrix(h_eff)
    eye = sp.identity(n, dtype=complex, format="csr")
    sup = -1j * sp.kron(h_eff, eye) + 1j * sp.kron(eye, h_eff.conj())
    for c, o in jumps:
        sup = sup + 2 * c * sp.kron(o, o.conj())
    sup = sp.csr_matrix(sup)
    sup.eliminate_zeros()
    return sup


@dataclass(frozen=True)
class IntegratorSettings:
    """Fixed-step RK4 settings; ``integrate`` shrinks ``dt`` slightly to land on the end time."""

    dt: float
    trace_tol: float = 1e-7
    herm_tol: float = 1e-8
    positivity_tol: float = 1e-6
    checkpoints: int = 4

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @classmethod
    def for_model(cls, em: EffectiveModel, steps_per_t1: int = DEFAULT_STEPS_PER_T1, **kw):
        return cls(dt=em.t1 / steps_per_t1, **kw)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> hb.DensityState:
        return self.states[-1]


def _check_state(rho: np.ndarray, trace0: complex, settings: IntegratorSettings,
                 t: float, positivity: bool) -> dict:
    if not np.all(np.isfinite(rho)):
        raise DriftError(f"non-finite density matrix at t={t:.6g}", {"t": t})
    diag = {
        "trace_drift": float(abs(np.trace(rho) - trace0)),
        "herm_drift": float(np.max(np.abs(rho - rho.conj().T))),
    }
    if positivity:
        diag["min_eig"] = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    return diag


def integrate(model: LindbladModel, rho0: hb.DensityState, t_final: float,
              settings: IntegratorSettings, *, superop: Optional[sp.csr_matrix] = None,
              store: bool = False) -> Trajectory:
    """Fixed-step RK4 for the Lindblad equation.

    The step is shrunk slightly so that an integer number of steps lands on
    ``t_final``. Trace, Hermiticity and positivity are checked at
    ``settings.checkpoints`` evenly spaced steps; violations raise DriftError.
    With ``store`` the checkpoint states are kept in the trajectory.
    """
    if rho0.space_dims != model.space_dims:
        raise hb.DimensionError(f"{rho0.space_dims} vs {model.space_dims}")
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    traj = Trajectory(times=[0.0], states=[rho0])
    if t_final == 0:
        return traj
    n = rho0.dim
    lv = liouvillian(model) if superop is None else superop
    steps = max(1, math.ceil(t_final / settings.dt - 1e-9))
    h = t_final / steps
    marks = set(np.linspace(0, steps, settings.checkpoints + 1).astype(int)[1:].tolist())
    trace0 = complex(np.trace(rho0.matrix))
    y = np.array(rho0.matrix, dtype=complex).ravel()
    worst = {"trace_drift": 0.0, "herm_drift": 0.0, "min_eig": 0.0}
    if not store:
        traj.times, traj.states = [], []
    for k in range(1, steps + 1):
        k1 = lv @ y
        k2 = lv @ (y + 0.5 * h * k1)
        k3 = lv @ (y + 0.5 * h * k2)
        k4 = lv @ (y + h * k3)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if k in marks:
            rho = y.reshape(n, n)
            diag = _check_state(rho, trace0, settings, k * h, positivity=True)
            worst["trace_drift"] = max(worst["trace_drift"], diag["trace_drift"])
            worst["herm_drift"] = max(worst["herm_drift"], diag["herm_drift"])
            worst["min_eig"] = min(worst["min_eig"], diag["min_eig"])
            if (diag["trace_drift"] > settings.trace_tol or diag["herm_drift"] > settings.herm_tol
                    or diag["min_eig"] < -settings.positivity_tol):
                raise DriftError(
                    f"integration drift at t={k * h:.6g}: " + ", ".join(f"{a}={b:.3e}" for a, b in diag.items()),
                    dict(diag, t=k * h, dt=h),
                )
            if store and k != steps:
                traj.times.append(k * h)
                traj.states.append(hb.DensityState(rho, model.space_dims))
    traj.times.append(t_final)
    traj.states.append(hb.DensityState(y.reshape(n, n), model.space_dims))
    traj.diagnostics = dict(worst, steps=steps, dt=h)
    return traj


def effective_master_model(em: EffectiveModel, dim: int, axis_phase: float = 0.0,
                           noisy: bool = True) -> LindbladModel:
    """CD Hamiltonian plus the squeezed-frame magnon and qubit dissipators."""
    dims = (dim, 2)
    ham = cd_hamiltonian(em.chi, dims, axis_phase)
    if not noisy:
        return LindbladModel(ham)
    m = hb.embed(hb.annihilation(dim), dims, 0)
    emb = lambda op: hb.embed(op, dims, 1)
    terms = [
        (em.kappa_m_prime / 2, m),
        (em.kappa_m_dprime / 2, m.dag()),
        (em.gamma_prime / 2, emb(hb.sigma_x())),
        (em.gamma_dprime / 4, emb(hb.sigma_y())),
        (em.gamma_dprime / 4, emb(hb.sigma_z())),
    ]
    return LindbladModel(ham, tuple((c, op) for c, op in terms if c > 0))


# ---------------------------------------------------------------------------
# cavity-magnon-qubit models for cross-validation

@dataclass(frozen=True)
class FullModelOps:
    """Operators on cavity (x) magnon (x) qubit."""

    c: np.ndarray
    m: np.ndarray
    sx: np.ndarray
    sz: np.ndarray
    sp: np.ndarray  # sigma_+ = |e><g|
    dims: tuple[int, int, int]


def full_model_ops(cavity_dim: int, magnon_dim: int, cap: int = FULL_MODEL_DIM_CAP) -> FullModelOps:
    dims = (cavity_dim, magnon_dim, 2)
    total = math.prod(dims)
    if total > cap:
        raise MemoryError(f"full model dimension {total} exceeds cap {cap}")
    ic, im, iq = np.eye(cavity_dim), np.eye(magnon_dim), np.eye(2)

    def k3(a, b, c):
        return np.kron(np.kron(a, b), c)

    return FullModelOps(
        c=k3(hb.annihilation(cavity_dim).matrix, im, iq),
        m=k3(ic, hb.annihilation(magnon_dim).matrix, iq),
        sx=k3(ic, im, hb.sigma_x().matrix),
        sz=k3(ic, im, hb.sigma_z().matrix),
        sp=k3(ic, im, hb.sigma_plus().matrix),
        dims=dims,
    )


def full_model_hamiltonian(em: EffectiveModel, cavity_dim: int = 6, magnon_dim: int = 20,
                           frame: str = "squeezed", cap: int = FULL_MODEL_DIM_CAP) -> hb.Operator:
    """Rabi-type cavity-magnon-qubit Hamiltonian (no drive).

    ``frame="lab"`` keeps the parametric term (xi/2)(m^dag^2 + m^2) with the
    bare magnon frequency and coupling; ``frame="squeezed"`` uses the
    Bogoliubov-mode frequency omega_m' and coupling g_cm'.
    """
    cfg = em.config
    o = full_model_ops(cavity_dim, magnon_dim, cap)
    cd = o.c.conj().T
    md = o.m.conj().T
    h = cfg.omega_q / 2 * o.sz + cfg.omega_c * cd @ o.c + cfg.g_cq * (cd + o.c) @ o.sx
    if frame == "squeezed":
        h = h + em.omega_m_prime * md @ o.m + em.g_cm_prime * (cd + o.c) @ (md + o.m)
    elif frame == "lab":
        h = (h + em.omega_m * md @ o.m + em.xi / 2 * (md @ md + o.m @ o.m)
             + cfg.g_cm * (cd + o.c) @ (md + o.m))
    else:
        raise ValueError(f"unknown frame {frame!r}")
    return hb.Operator(h, o.dims)


def fn_generator(em: EffectiveModel, cavity_dim: int = 6, magnon_dim: int = 20) -> hb.Operator:
    """Anti-Hermitian V with H_I + [H_0, V] = 0 (squeezed frame); U_1 = exp(V)."""
    o = full_model_ops(cavity_dim, magnon_dim)
    c, m, spl = o.c, o.m, o.sp
    cd, md, smi = c.conj().T, m.conj().T, spl.conj().T
    v = (em.mu_q * (c @ smi - cd @ spl) + em.nu_q * (c @ spl - cd @ smi)
         + em.mu_m * (c @ m - cd @ md) + em.nu_m * (c @ md - cd @ m))
    return hb.Operator(v, o.dims)


def jc_hamiltonian(delta_q: float, delta_m: float, chi: float, dim: int,
                   epsilon: float = 0.0) -> hb.Operator:
    """(delta_q/2) sz + delta_m m^dag m - chi (m s+ + m^dag s-) + epsilon sx on magnon (x) qubit.

    With bare frequencies and epsilon = 0 this is the Jaynes-Cummings model;
    with detunings from the drive it is its drive-frame version.
    """
    dims = (dim, 2)
    m = hb.embed(hb.annihilation(dim), dims, 0).matrix
    spl = hb.embed(hb.sigma_plus(), dims, 1).matrix
    sz = hb.embed(hb.sigma_z(), dims, 1).matrix
    sx = hb.embed(hb.sigma_x(), dims, 1).matrix
    h = (delta_q / 2 * sz + delta_m * m.conj().T @ m
         - chi * (m @ spl + m.conj().T @ spl.conj().T) + epsilon * sx)
    return hb.Operator(h, dims)


@dataclass(frozen=True)
class ValidationResult:
    overlap: float  # <psi_eff| rho_mq |psi_eff>
    cavity_vacuum: float  # cavity ground-state population after undoing U_1
    chi_t: float
    time: float


def validate_effective_model(em: EffectiveModel, chi_t: float = 0.3, cavity_dim: int = 6,
                             magnon_dim: int = 20, rtol: float = 1e-10,
                             atol: float = 1e-12) -> ValidationResult:
    """Compare driven full-model evolution with the effective CD model.

    The squeezed-frame Hamiltonian plus the qubit drive is integrated from
    U_1|0_c, 0_m, g> (the dressed ground state). The result is mapped back
    through U_1^dag, the drive-frequency rotation and the drive-Rabi rotation,
    the cavity is traced out, and the magnon-qubit state is compared with
    exp(-i H_cd t)|0, g>.
    """
    cfg = em.config
    o = full_model_ops(cavity_dim, magnon_dim)
    h1 = full_model_hamiltonian(em, cavity_dim, magnon_dim, frame="squeezed").matrix
    u1 = sla.expm(fn_generator(em, cavity_dim, magnon_dim).matrix)
    omega_p = em.omega_q_prime if cfg.omega_p is None else cfg.omega_p
    eps = cfg.epsilon
    spl = o.sp
    smi = spl.conj().T
    t_end = chi_t / em.chi
    # scale time to chi units for the solver
    scale = 1.0 / em.chi

    def rhs(s, y):
        t = s * scale
        drive = eps * (spl * np.exp(-1j * omega_p * t) + smi * np.exp(1j * omega_p * t))
        return -1j * scale * ((h1 + drive) @ y)

    psi0 = np.zeros(math.prod(o.dims), dtype=complex)
    psi0[0] = 1.0
    sol = solve_ivp(rhs, (0.0, chi_t), u1 @ psi0, method="DOP853", rtol=rtol, atol=atol)
    psi = sol.y[:, -1]
    psi = u1.conj().T @ psi
    excit = o.m.conj().T @ o.m + o.c.conj().T @ o.c + o.sz / 2
    psi = sla.expm(1j * omega_p * t_end * excit) @ psi
    psi = sla.expm(1j * eps * t_end * o.sx) @ psi
    amp = psi.reshape(cavity_dim, magnon_dim * 2)
    rho = amp.T @ amp.conj()
    ref = np.zeros(magnon_dim * 2, dtype=complex)
    ref[0] = 1.0
    ref = evolve_pure_cd(hb.HybridState(ref, (magnon_dim, 2)), em.chi, t_end).amplitudes
    overlap = float(np.real(np.vdot(ref, rho @ ref)))
    return ValidationResult(
        overlap=overlap,
        cavity_vacuum=float(np.linalg.norm(amp[0]) ** 2),
        chi_t=chi_t,
        time=t_end,
    )
