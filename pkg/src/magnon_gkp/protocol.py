"""Measurement-based preparation sequences.

All steps act in the squeezed (Bogoliubov) frame in which the CD Hamiltonian
holds. ``to_lab_frame`` maps the result back with S(r). Displacements in a
sequence are in-frame amplitudes; ``lab_to_frame_alpha`` converts a desired
lab-frame displacement.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

from . import hilbert as hb
from .dynamics import (IntegratorSettings, effective_master_model, evolve_pure_cd, integrate,
                       liouvillian)
from .params import EffectiveModel

SQRT_2PI = math.sqrt(2 * math.pi)  # lattice constant l
HALF_LATTICE = math.sqrt(math.pi / 2)  # l / 2

# Hadamard/phase-gate template constants (see calibrate_gate)
GATE_CD_FRACTION = 0.5  # CD duration in units of t1
GATE_DISPLACEMENT = SQRT_2PI / 4  # lab-frame re-centring displacement along p
PHASE_GATE_ROTATION = -math.pi / 2  # exp(-i theta sigma_x / 2) before projection

TARGETS = ("0_L", "1_L", "+_L", "-_L", "phi+_L", "phi-_L")
_TARGET_ALIASES = {"−_L": "-_L", "φ+_L": "phi+_L", "φ-_L": "phi-_L", "φ−_L": "phi-_L"}

MIN_DIM = 120
PAD_MARGIN = 4.0
TAIL_TOL = 1e-12


class ZeroNormError(ValueError):
    """A codeword superposition interferes destructively to (numerically) nothing."""


# ---------------------------------------------------------------------------
# steps

@dataclass(frozen=True)
class CD:
    duration: float
    axis_phase: float = 0.0
    noisy: bool = True  # integrate the master equation when running with noise

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("CD duration must be non-negative")


@dataclass(frozen=True)
class ProjectQubit:
    outcome: str = "g"

    def __post_init__(self):
        if self.outcome not in ("g", "e"):
            raise ValueError(f"outcome must be 'g' or 'e', got {self.outcome!r}")


@dataclass(frozen=True)
class Displace:
    alpha: complex  # in-frame amplitude


@dataclass(frozen=True)
class QubitRotate:
    axis: str
    angle: float

    def __post_init__(self):
        if self.axis not in ("x", "y", "z"):
            raise ValueError(f"axis must be x, y or z, got {self.axis!r}")


@dataclass(frozen=True)
class Idle:
    duration: float
    noisy: bool = True

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("idle duration must be non-negative")


Step = Union[CD, ProjectQubit, Displace, QubitRotate, Idle]
_KINDS = {"cd": CD, "project": ProjectQubit, "displace": Displace, "rotate": QubitRotate, "idle": Idle}


def step_to_dict(step: Step) -> dict:
    kind = next(k for k, cls in _KINDS.items() if isinstance(step, cls))
    out = {"kind": kind}
    for name, val in vars(step).items():
        out[name] = [val.real, val.imag] if isinstance(val, complex) else val
    return out


def step_from_dict(d: dict) -> Step:
    d = dict(d)
    try:
        cls = _KINDS[d.pop("kind")]
    except KeyError as exc:
        raise ValueError(f"unknown or missing step kind in {d!r}") from exc
    if cls is Displace:
        a = d["alpha"]
        d["alpha"] = complex(a[0], a[1]) if isinstance(a, (list, tuple)) else complex(a)
    return cls(**d)


@dataclass(frozen=True)
class Sequence:
    steps: tuple = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __add__(self, other: Sequence) -> Sequence:
        return Sequence(self.steps + other.steps, self.name or other.name)

    def __len__(self):
        return len(self.steps)

    def to_list(self) -> list:
        return [step_to_dict(s) for s in self.steps]

    @classmethod
    def from_list(cls, items: Iterable[dict], name: str = "") -> Sequence:
        return cls(tuple(step_from_dict(d) for d in items), name)

    def max_displacement(self, chi: float) -> float:
        """Largest in-frame excursion reached if every CD adds along the same axis."""
        total = worst = 0.0
        for s in self.steps:
            if isinstance(s, CD):
                total += chi * s.duration / 2
            elif isinstance(s, Displace):
                total += abs(s.alpha)
            worst = max(worst, total)
        return worst


@dataclass
class RunResult:
    state: hb.State
    probabilities: list = field(default_factory=list)  # one entry per step, 1.0 for non-projections
    diagnostics: list = field(default_factory=list)

    @property
    def success_probability(self) -> float:
        return float(math.prod(self.probabilities))

    def magnon(self) -> hb.State:
        return hb.magnon_part(self.state)


# ---------------------------------------------------------------------------
# frames and truncation

def lab_to_frame_alpha(alpha_lab: complex, r: float) -> complex:
    """In-frame amplitude whose image under S(r) is D(alpha_lab)."""
    return complex(alpha_lab.real * math.exp(-r), alpha_lab.imag * math.exp(r))


def frame_to_lab_alpha(alpha_frame: complex, r: float) -> complex:
    return complex(alpha_frame.real * math.exp(r), alpha_frame.imag * math.exp(-r))


def default_dim(alpha_max: float) -> int:
    return max(MIN_DIM, math.ceil((abs(alpha_max) + 5) ** 2))


def required_dim(state: hb.State, shift: float) -> int:
    """Cutoff that keeps a state displaced by |shift| clear of the top levels."""
    n_top = hb.support_dim(state, tol=TAIL_TOL)
    return math.ceil((math.sqrt(n_top) + abs(shift) + PAD_MARGIN) ** 2)


def _ensure_room(state: hb.State, shift: float, auto_pad: bool) -> hb.State:
    need = required_dim(state, shift)
    if need <= state.space_dims[0]:
        return state
    if auto_pad:
        return hb.resize(state, need)
    warnings.warn(f"state needs about {need} levels for a shift of {abs(shift):.3g}, has "
                  f"{state.space_dims[0]}", hb.TruncationWarning, stacklevel=3)
    return state


def to_lab_frame(state: hb.State, r: float, pad: int = 60, max_dim: int = 1200) -> hb.State:
    """Apply S(r) to the magnon factor.

    The state is zero-padded first (by ``pad`` levels, doubled until the
    squeezed image stays clear of the cutoff) so the truncated S(r) acts like
    the exact operator on it.
    """
    if r == 0:
        return state
    dim = state.space_dims[0]
    extra = pad
    while True:
        big = min(max_dim, dim + extra)
        padded = hb.resize(state, big)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", hb.TruncationWarning)
            s = hb.squeezing(big, r)
        out = hb.apply_local(s, padded, 0)
        leak = hb.leakage(out)
        if leak < 1e-12 or big >= max_dim:
            break
        extra *= 2
    if leak >= 1e-9:
        warnings.warn(f"lab-frame state leaks {leak:.2e} into the top levels at dim={big}",
                      hb.TruncationWarning, stacklevel=2)
    return out


# ---------------------------------------------------------------------------
# running sequences

class _LiouvillianCache:
    def __init__(self, em: EffectiveModel):
        self.em = em
        self.store = {}

    def get(self, dim: int, axis_phase: float, with_coupling: bool):
        key = (dim, axis_phase, with_coupling)
        if key not in self.store:
            model = effective_master_model(self.em, dim, axis_phase)
            if not with_coupling:
                model = type(model)(hb.Operator(np.zeros_like(model.hamiltonian.matrix), (dim, 2)),
                                    model.dissipators)
            self.store[key] = (model, liouvillian(model))
        return self.store[key]


def run_sequence(seq: Sequence, initial: hb.State, em: Optional[EffectiveModel] = None, *,
                 noise: bool = False, settings: Optional[IntegratorSettings] = None,
                 auto_pad: bool = True, cache: Optional[_LiouvillianCache] = None) -> RunResult:
    """Apply the steps of ``seq`` to ``initial`` (magnon (x) qubit, squeezed frame).

    With ``noise`` the state is carried as a density matrix and CD/Idle steps
    flagged ``noisy`` integrate the effective master equation at the current
    truncation. Every other step is exact: CD in closed form, displacements
    and rotations as unitaries, projections ideal. Unitary steps grow the
    truncation when the state would otherwise reach the cutoff.
    """
    if initial.space_dims[-1] != 2 or len(initial.space_dims) != 2:
        raise hb.DimensionError(f"expected magnon (x) qubit state, got dims {initial.space_dims}")
    state = initial.to_density() if noise and isinstance(initial, hb.HybridState) else initial
    needs_model = any(isinstance(s, (CD, Idle)) for s in seq.steps)
    if needs_model and em is None:
        raise ValueError("sequence contains CD/Idle steps but no effective model was given")
    if noise:
        if settings is None:
            settings = IntegratorSettings.for_model(em)
        if cache is None:
            cache = _LiouvillianCache(em)
    result = RunResult(state)
    for step in seq.steps:
        prob = 1.0
        if isinstance(step, CD):
            if noise and step.noisy:
                model, lv = cache.get(state.space_dims[0], step.axis_phase, True)
                traj = integrate(model, state, step.duration, settings, superop=lv)
                state = traj.final
                result.diagnostics.append(traj.diagnostics)
            else:
                state = _ensure_room(state, em.chi * step.duration / 2, auto_pad)
                state = evolve_pure_cd(state, em.chi, step.duration, step.axis_phase)
        elif isinstance(step, Idle):
            if noise and step.noisy and step.duration > 0:
                model, lv = cache.get(state.space_dims[0], 0.0, False)
                traj = integrate(model, state, step.duration, settings, superop=lv)
                state = traj.final
                result.diagnostics.append(traj.diagnostics)
        elif isinstance(step, ProjectQubit):
            state, prob = hb.project_qubit(state, step.outcome)
        elif isinstance(step, Displace):
            state = _ensure_room(state, abs(step.alpha), auto_pad)
            state = hb.apply_local(hb.displacement(state.space_dims[0], step.alpha), state, 0)
        elif isinstance(step, QubitRotate):
            state = hb.apply_local(hb.qubit_rotation(step.axis, step.angle), state, 1)
        else:
            raise TypeError(f"unknown step {step!r}")
        result.probabilities.append(prob)
    result.state = state
    return result


# ---------------------------------------------------------------------------
# presets

def canonical_target(target: str) -> str:
    t = _TARGET_ALIASES.get(target, target)
    if t not in TARGETS:
        raise ValueError(f"unknown target {target!r}; choose from {', '.join(TARGETS)}")
    return t


def zero_sequence(em: EffectiveModel) -> Sequence:
    return Sequence((CD(em.t1), ProjectQubit("g"), CD(em.t1), ProjectQubit("g")), "0_L")


def gate_suffix(target: str, em: EffectiveModel, gates: str = "ideal",
                cd_fraction: float = GATE_CD_FRACTION,
                displacement: float = GATE_DISPLACEMENT) -> Sequence:
    """Steps that turn the prepared |0>_L into ``target``.

    ``gates="ideal"`` runs the gate's CD round without dissipation;
    ``gates="noisy"`` integrates it like the preparation rounds.
    """
    target = canonical_target(target)
    if gates not in ("ideal", "noisy"):
        raise ValueError(f"gates must be 'ideal' or 'noisy', got {gates!r}")
    noisy = gates == "noisy"
    r = em.r
    z_l = Displace(lab_to_frame_alpha(-HALF_LATTICE, r))
    if target == "0_L":
        steps = ()
    elif target == "1_L":
        steps = (Displace(lab_to_frame_alpha(-1j * HALF_LATTICE, r)),)
    else:
        steps = [CD(cd_fraction * em.t1, noisy=noisy)]
        if target.startswith("phi"):
            steps.append(QubitRotate("x", PHASE_GATE_ROTATION))
        steps += [ProjectQubit("g"), Displace(lab_to_frame_alpha(1j * displacement, r))]
        if target in ("-_L", "phi-_L"):
            steps.append(z_l)
        steps = tuple(steps)
    return Sequence(steps, target)


def preset_sequence(target: str, em: EffectiveModel, gates: str = "ideal") -> Sequence:
    target = canonical_target(target)
    return Sequence(zero_sequence(em).steps + gate_suffix(target, em, gates).steps, target)


def initial_state(dim: int) -> hb.HybridState:
    """Bogoliubov vacuum with the qubit in |g>."""
    return hb.tensor(hb.vacuum(dim), hb.qubit("g"))


def preset_dim(em: EffectiveModel) -> int:
    return default_dim(zero_sequence(em).max_displacement(em.chi))


def run_presets(em: EffectiveModel, targets: Iterable[str] = TARGETS, *, noise: bool = False,
                dim: Optional[int] = None, gates: str = "ideal",
                settings: Optional[IntegratorSettings] = None) -> dict:
    """Run several presets, sharing the |0>_L preparation between them."""
    dim = preset_dim(em) if dim is None else dim
    cache = _LiouvillianCache(em) if noise else None
    prefix = run_sequence(zero_sequence(em), initial_state(dim), em, noise=noise,
                          settings=settings, cache=cache)
    out = {}
    for t in targets:
        t = canonical_target(t)
        suffix = run_sequence(gate_suffix(t, em, gates), prefix.state, em, noise=noise,
                              settings=settings, cache=cache)
        out[t] = RunResult(suffix.state, prefix.probabilities + suffix.probabilities,
                           prefix.diagnostics + suffix.diagnostics)
    return out


# ---------------------------------------------------------------------------
# codewords and logical operators

@dataclass(frozen=True)
class CodewordSpec:
    components: tuple  # ((weight, displacement), ...)
    squeeze_r: float = 0.0

    def __post_init__(self):
        comps = tuple((complex(c), complex(a)) for c, a in self.components)
        if not comps:
            raise ValueError("codeword needs at least one component")
        object.__setattr__(self, "components", comps)

    def displaced(self, beta: complex) -> CodewordSpec:
        """Spec of D(beta) applied to this codeword (Weyl phases folded into the weights)."""
        beta = complex(beta)
        comps = tuple((c * np.exp(1j * (beta * a.conjugate()).imag), a + beta)
                      for c, a in self.components)
        return CodewordSpec(comps, self.squeeze_r)

    def max_displacement(self) -> float:
        return max(abs(a) for _, a in self.components)


def build_codeword(spec: CodewordSpec, dim: Optional[int] = None) -> hb.HybridState:
    """Normalized sum_k c_k D(alpha_k) S(r)|0> on the magnon space."""
    if dim is None:
        dim = default_dim(spec.max_displacement() + math.exp(abs(spec.squeeze_r)))
    vac = hb.vacuum(dim)
    base = hb.squeezing(dim, spec.squeeze_r) @ vac
    total = np.zeros(dim, dtype=complex)
    for c, a in spec.components:
        total += c * (hb.displacement(dim, a) @ base).amplitudes
    nrm = np.linalg.norm(total)
    if nrm < 1e-12:
        raise ZeroNormError("codeword components cancel")
    return hb.HybridState(total / nrm, (dim,))


def zero_codeword_spec(r: float, weights=(1, 2, 1)) -> CodewordSpec:
    """|0>_L approximation: weights on peaks spaced by i sqrt(2 pi), centred on the origin."""
    k0 = (len(weights) - 1) / 2
    return CodewordSpec(tuple((w, 1j * (k - k0) * SQRT_2PI) for k, w in enumerate(weights)), r)


def logical_codeword_specs(r: float, weights=(1, 2, 1)) -> dict:
    """Specs of the six logical Pauli eigenstates built from |0>_L and |1>_L = D(-i sqrt(pi/2))|0>_L."""
    zero = zero_codeword_spec(r, weights)
    one = zero.displaced(-1j * HALF_LATTICE)
    out = {"0_L": zero, "1_L": one}
    for name, phase in (("+_L", 1), ("-_L", -1), ("phi+_L", 1j), ("phi-_L", -1j)):
        out[name] = CodewordSpec(zero.components + tuple((phase * c, a) for c, a in one.components), r)
    return out


def n3_norm(alpha_s: float) -> float:
    a2 = abs(alpha_s) ** 2
    return (6 + 8 * math.exp(-2 * a2) + 2 * math.exp(-8 * a2)) ** -0.5


def n4_norm(alpha_s: float) -> float:
    a2 = abs(alpha_s) ** 2
    return (4 + 6 * math.exp(-2 * a2) + 4 * math.exp(-8 * a2) + 2 * math.exp(-18 * a2)) ** -0.5


def three_component_state(alpha_s: float, dim: int) -> hb.HybridState:
    """N3 [D(2i a) + 2 + D(-2i a)]|0>, normalized with the closed-form N3."""
    v = (hb.displacement(dim, 2j * alpha_s) @ hb.vacuum(dim)).amplitudes
    w = (hb.displacement(dim, -2j * alpha_s) @ hb.vacuum(dim)).amplitudes
    amps = n3_norm(alpha_s) * (v + 2 * hb.vacuum(dim).amplitudes + w)
    return hb.HybridState(amps, (dim,))


def four_component_state(alpha_s: float, dim: int) -> hb.HybridState:
    """N4 [D(3i a) + D(i a) + D(-i a) + D(-3i a)]|0>."""
    amps = sum((hb.displacement(dim, k * 1j * alpha_s) @ hb.vacuum(dim)).amplitudes
               for k in (3, 1, -1, -3))
    return hb.HybridState(n4_norm(alpha_s) * amps, (dim,))


LOGICAL_DISPLACEMENTS = {
    "X": 1j * HALF_LATTICE,  # u/2
    "Z": -HALF_LATTICE + 0j,  # v/2
    "Y": HALF_LATTICE - 1j * HALF_LATTICE,  # -u/2 - v/2
}
STABILIZERS = {"X": 1j * SQRT_2PI, "Z": -SQRT_2PI + 0j}


def logical_pauli(which: str, state: hb.State) -> hb.State:
    """Apply the lab-frame logical Pauli X_L, Y_L or Z_L (a half-lattice displacement)."""
    try:
        beta = LOGICAL_DISPLACEMENTS[which.upper()]
    except KeyError:
        raise ValueError(f"unknown logical Pauli {which!r}") from None
    return hb.apply_local(hb.displacement(state.space_dims[0], beta), state, 0)


# ---------------------------------------------------------------------------
# calibration of the Hadamard/phase-gate template

@dataclass(frozen=True)
class Calibration:
    cd_fraction: float
    displacement: float
    fidelity: float
    nominal_fidelity: float


def calibrate_gate(em: EffectiveModel, target: str = "+_L", dim: Optional[int] = None,
                   x0=(GATE_CD_FRACTION, GATE_DISPLACEMENT)) -> Calibration:
    """Optimize (CD fraction, lab displacement) of the gate template on the noiseless |0>_L.

    The figure of merit is the logical fidelity of the gate output with the
    ideal logical target, from the Hermitized half-lattice expectations.
    """
    from scipy.optimize import minimize

    from .analysis import logical_tomography

    target = canonical_target(target)
    dim = preset_dim(em) if dim is None else dim
    zero = run_sequence(zero_sequence(em), initial_state(dim), em).state

    def fid(x):
        seq = gate_suffix(target, em, "ideal", cd_fraction=x[0], displacement=x[1])
        out = run_sequence(seq, zero, em).magnon()
        return logical_tomography(to_lab_frame(out, em.r)).fidelities[target]

    res = minimize(lambda x: -fid(x), np.asarray(x0, dtype=float), method="Nelder-Mead",
                   options={"xatol": 1e-4, "fatol": 1e-7})
    return Calibration(float(res.x[0]), float(res.x[1]), -float(res.fun), fid(x0))
