"""Truncated Fock space (x) qubit linear algebra.

Conventions used everywhere in the package:

* composite spaces are ordered magnon (x) qubit, so the qubit is always the
  last factor;
* the qubit basis is ordered (|g>, |e>) with sigma_z |e> = +|e>, and
  |+-> = (|g> +- |e>)/sqrt(2) are the sigma_x eigenvectors;
* quadratures are q = (m + m^dag)/sqrt(2) and p = (m - m^dag)/(i sqrt(2));
* D(alpha) = exp(alpha m^dag - alpha^* m) and
  S(r) = exp[(r/2)(m^dag^2 - m^2)], which squeezes p for r > 0.

All containers are immutable: the arrays they hold are private copies with the
write flag cleared.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Union

import numpy as np

LEAKAGE_THRESHOLD = 1e-6
LEAKAGE_FRACTION = 0.05
HERMITIAN_TOL = 1e-10
IMPOSSIBLE_OUTCOME_TOL = 1e-12

QUBIT_LEVELS = {"g": 0, "e": 1}


class DimensionError(ValueError):
    """Operands live on incompatible spaces."""


class ImpossibleOutcomeError(ValueError):
    """A projective measurement outcome has (numerically) zero probability."""


class TruncationWarning(UserWarning):
    """Population is piling up near the Fock cutoff."""


def _frozen(data, dtype=complex) -> np.ndarray:
    arr = np.array(data, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _dims(space_dims) -> tuple[int, ...]:
    dims = tuple(int(d) for d in space_dims)
    if not dims or any(d < 1 for d in dims):
        raise DimensionError(f"invalid space dims {space_dims!r}")
    return dims


@dataclass(frozen=True)
class FockSpace:
    """Fock space truncated to |0>, ..., |dim - 1>."""

    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"Fock truncation must be an integer >= 2, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))


@dataclass(frozen=True, eq=False)
class Operator:
    matrix: np.ndarray
    space_dims: tuple[int, ...]

    def __post_init__(self):
        dims = _dims(self.space_dims)
        mat = _frozen(self.matrix)
        n = math.prod(dims)
        if mat.shape != (n, n):
            raise DimensionError(f"matrix shape {mat.shape} does not match dims {dims}")
        object.__setattr__(self, "space_dims", dims)
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dag(self) -> Operator:
        return Operator(self.matrix.conj().T, self.space_dims)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= tol)

    def _check(self, other: Operator):
        if other.space_dims != self.space_dims:
            raise DimensionError(f"{self.space_dims} vs {other.space_dims}")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.matrix @ other.matrix, self.space_dims)
        if isinstance(other, HybridState):
            if other.space_dims != self.space_dims:
                raise DimensionError(f"{self.space_dims} vs {other.space_dims}")
            return HybridState(self.matrix @ other.amplitudes, self.space_dims)
        return NotImplemented

    def __add__(self, other: Operator) -> Operator:
        self._check(other)
        return Operator(self.matrix + other.matrix, self.space_dims)

    def __sub__(self, other: Operator) -> Operator:
        self._check(other)
        return Operator(self.matrix - other.matrix, self.space_dims)

    def __neg__(self) -> Operator:
        return Operator(-self.matrix, self.space_dims)

    def __mul__(self, scalar) -> Operator:
        if not np.isscalar(scalar):
            return NotImplemented
        return Operator(scalar * self.matrix, self.space_dims)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class HybridState:
    """Pure state vector on a (possibly composite) truncated space."""

    amplitudes: np.ndarray
    space_dims: tuple[int, ...]

    def __post_init__(self):
        dims = _dims(self.space_dims)
        amps = _frozen(self.amplitudes).ravel()
        if amps.shape != (math.prod(dims),):
            raise DimensionError(f"{amps.shape[0]} amplitudes do not match dims {dims}")
        object.__setattr__(self, "space_dims", dims)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> HybridState:
        nrm = self.norm
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return HybridState(self.amplitudes / nrm, self.space_dims)

    def to_density(self) -> DensityState:
        return DensityState(np.outer(self.amplitudes, self.amplitudes.conj()), self.space_dims)


@dataclass(frozen=True, eq=False)
class DensityState:
    matrix: np.ndarray
    space_dims: tuple[int, ...]

    def __post_init__(self):
        dims = _dims(self.space_dims)
        mat = _frozen(self.matrix)
        n = math.prod(dims)
        if mat.shape != (n, n):
            raise DimensionError(f"matrix shape {mat.shape} does not match dims {dims}")
        object.__setattr__(self, "space_dims", dims)
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def check(self, trace_tol=1e-9, herm_tol=HERMITIAN_TOL, eig_tol=1e-8) -> None:
        """Raise ValueError unless this is a valid density matrix within tolerances."""
        if abs(self.trace - 1.0) > trace_tol:
            raise ValueError(f"trace {self.trace} deviates from 1 by more than {trace_tol}")
        herm = self.hermiticity_error()
        if herm > herm_tol:
            raise ValueError(f"hermiticity error {herm:.3e} exceeds {herm_tol}")
        lam = self.min_eigenvalue()
        if lam < -eig_tol:
            raise ValueError(f"minimum eigenvalue {lam:.3e} below -{eig_tol}")


State = Union[HybridState, DensityState]


# ---------------------------------------------------------------------------
# elementary operators and states

def _space_dim(space) -> int:
    return space.dim if isinstance(space, FockSpace) else FockSpace(space).dim


def annihilation(space: FockSpace | int) -> Operator:
    dim = _space_dim(space)
    return Operator(np.diag(np.sqrt(np.arange(1, dim)), 1), (dim,))


def creation(space: FockSpace | int) -> Operator:
    return annihilation(space).dag()


def number(space: FockSpace | int) -> Operator:
    dim = _space_dim(space)
    return Operator(np.diag(np.arange(dim, dtype=float)), (dim,))


def quadrature_q(space: FockSpace | int) -> Operator:
    m = annihilation(space)
    return (m + m.dag()) * (1 / math.sqrt(2))


def quadrature_p(space: FockSpace | int) -> Operator:
    m = annihilation(space)
    return (m - m.dag()) * (1 / (1j * math.sqrt(2)))


def identity(space_dims) -> Operator:
    if isinstance(space_dims, FockSpace):
        space_dims = (space_dims.dim,)
    elif isinstance(space_dims, int):
        space_dims = (space_dims,)
    dims = _dims(space_dims)
    return Operator(np.eye(math.prod(dims)), dims)


def sigma_x() -> Operator:
    return Operator([[0, 1], [1, 0]], (2,))


def sigma_y() -> Operator:
    # (g, e) ordering: <g|sigma_y|e> = i
    return Operator([[0, 1j], [-1j, 0]], (2,))


def sigma_z() -> Operator:
    return Operator([[-1, 0], [0, 1]], (2,))


def sigma_plus() -> Operator:
    """|e><g|"""
    return Operator([[0, 0], [1, 0]], (2,))


def sigma_minus() -> Operator:
    return sigma_plus().dag()


PAULIS = {"x": sigma_x, "y": sigma_y, "z": sigma_z}


def qubit_rotation(axis: str, angle: float) -> Operator:
    """exp(-i angle sigma_axis / 2)."""
    try:
        sig = PAULIS[axis]().matrix
    except KeyError:
        raise ValueError(f"unknown rotation axis {axis!r}") from None
    return Operator(math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * sig, (2,))


def fock(space: FockSpace | int, n: int) -> HybridState:
    dim = _space_dim(space)
    if not 0 <= n < dim:
        raise ValueError(f"Fock level {n} outside truncation {dim}")
    amps = np.zeros(dim, dtype=complex)
    amps[n] = 1.0
    return HybridState(amps, (dim,))


def vacuum(space: FockSpace | int) -> HybridState:
    return fock(space, 0)


def qubit(label: str) -> HybridState:
    s = 1 / math.sqrt(2)
    table = {"g": [1, 0], "e": [0, 1], "+": [s, s], "-": [s, -s]}
    try:
        return HybridState(table[label], (2,))
    except KeyError:
        raise ValueError(f"unknown qubit state {label!r}") from None


def coherent(space: FockSpace | int, alpha: complex) -> HybridState:
    """Truncated coherent state from the closed-form Poisson amplitudes (not renormalized)."""
    dim = _space_dim(space)
    n = np.arange(dim)
    if alpha == 0:
        return vacuum(dim)
    log_mag = -abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * np.array(
        [math.lgamma(k + 1) for k in n]
    )
    amps = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    return HybridState(amps, (dim,))


# ---------------------------------------------------------------------------
# matrix exponentials

@lru_cache(maxsize=64)
def _displacement_eig(dim: int, theta: float):
    # K = i (e^{i theta} m^dag - e^{-i theta} m) is Hermitian; D(|a| e^{i theta}) = exp(-i |a| K)
    m = np.diag(np.sqrt(np.arange(1, dim)), 1)
    gen = np.exp(1j * theta) * m.T - np.exp(-1j * theta) * m
    w, v = np.linalg.eigh(1j * gen)
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


@lru_cache(maxsize=16)
def _squeezing_eig(dim: int):
    m = np.diag(np.sqrt(np.arange(1, dim)), 1)
    gen = 0.5 * (m.T @ m.T - m @ m)
    w, v = np.linalg.eigh(1j * gen)
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


def _exp_from_eig(w, v, scale: float) -> np.ndarray:
    return (v * np.exp(-1j * scale * w)) @ v.conj().T


def leakage(state: State, fraction: float = LEAKAGE_FRACTION) -> float:
    """Population in the top ``fraction`` of Fock levels of the first (magnon) factor."""
    dim = state.space_dims[0]
    top = max(1, math.ceil(fraction * dim))
    pops = populations(state)
    return float(np.sum(pops[dim - top:]))


def populations(state: State) -> np.ndarray:
    """Fock-level populations of the first factor."""
    dim = state.space_dims[0]
    rest = math.prod(state.space_dims[1:])
    if isinstance(state, HybridState):
        return np.sum(np.abs(state.amplitudes.reshape(dim, rest)) ** 2, axis=1)
    diag = np.real(np.diagonal(state.matrix)).reshape(dim, rest)
    return np.sum(diag, axis=1)


def _warn_leakage(column: np.ndarray, what: str, threshold: float, stacklevel: int = 3):
    dim = column.shape[0]
    top = max(1, math.ceil(LEAKAGE_FRACTION * dim))
    leak = float(np.sum(np.abs(column[dim - top:]) ** 2))
    if leak > threshold:
        warnings.warn(
            f"{what}: top-level population {leak:.2e} exceeds {threshold:.0e} at dim={dim}",
            TruncationWarning,
            stacklevel=stacklevel,
        )
    return leak


def displacement(space: FockSpace | int, alpha: complex, *,
                 leakage_threshold: float = LEAKAGE_THRESHOLD) -> Operator:
    """Truncated displacement operator D(alpha).

    Computed from the eigendecomposition of the Hermitian generator, so the
    result is unitary to machine precision; its matrix elements are accurate
    only well below the cutoff (a TruncationWarning flags D(alpha)|0> reaching
    the top levels).
    """
    dim = _space_dim(space)
    alpha = complex(alpha)
    if alpha == 0:
        return identity(dim)
    w, v = _displacement_eig(dim, float(np.angle(alpha)))
    mat = _exp_from_eig(w, v, abs(alpha))
    _warn_leakage(mat[:, 0], f"D({alpha:.3g})", leakage_threshold)
    return Operator(mat, (dim,))


def squeezing(space: FockSpace | int, r: float, *,
              leakage_threshold: float = LEAKAGE_THRESHOLD) -> Operator:
    """Truncated squeezing operator S(r); r > 0 squeezes p."""
    dim = _space_dim(space)
    if r == 0:
        return identity(dim)
    w, v = _squeezing_eig(dim)
    mat = _exp_from_eig(w, v, float(r))
    _warn_leakage(mat[:, 0], f"S({r:.3g})", leakage_threshold)
    return Operator(mat, (dim,))


# ---------------------------------------------------------------------------
# composites

def tensor(a, b):
    """Kronecker product of two operators or two states of the same kind."""
    if type(a) is not type(b):
        raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")
    dims = a.space_dims + b.space_dims
    if isinstance(a, Operator):
        return Operator(np.kron(a.matrix, b.matrix), dims)
    if isinstance(a, HybridState):
        return HybridState(np.kron(a.amplitudes, b.amplitudes), dims)
    if isinstance(a, DensityState):
        return DensityState(np.kron(a.matrix, b.matrix), dims)
    raise TypeError(f"cannot tensor {type(a).__name__}")


def tensor_all(*items):
    return reduce(tensor, items)


def embed(op: Operator, space_dims, factor: int) -> Operator:
    """Lift a single-factor operator to act on ``factor`` of a composite space."""
    dims = _dims(space_dims)
    if op.space_dims != (dims[factor],):
        raise DimensionError(f"operator dims {op.space_dims} vs factor {factor} of {dims}")
    parts = [identity(d) for d in dims]
    parts[factor] = op
    return tensor_all(*parts)


def apply_local(matrix, state: State, factor: int = 0) -> State:
    """Apply a single-factor matrix U to ``factor`` of a composite state.

    Pure states map to U psi, density matrices to U rho U^dag. Avoids building
    the full Kronecker product.
    """
    mat = matrix.matrix if isinstance(matrix, Operator) else np.asarray(matrix, dtype=complex)
    dims = state.space_dims
    if mat.shape != (dims[factor], dims[factor]):
        raise DimensionError(f"matrix {mat.shape} cannot act on factor {factor} of {dims}")
    nf = len(dims)
    if isinstance(state, HybridState):
        t = state.amplitudes.reshape(dims)
        t = np.moveaxis(np.tensordot(mat, t, axes=([1], [factor])), 0, factor)
        return HybridState(t.ravel(), dims)
    t = state.matrix.reshape(dims + dims)
    t = np.moveaxis(np.tensordot(mat, t, axes=([1], [factor])), 0, factor)
    t = np.moveaxis(np.tensordot(mat.conj(), t, axes=([1], [nf + factor])), 0, nf + factor)
    n = math.prod(dims)
    return DensityState(t.reshape(n, n), dims)


def resize(state: State, dim: int) -> State:
    """Zero-pad or cut the first (magnon) factor to ``dim`` levels, without renormalizing."""
    dims = state.space_dims
    old = dims[0]
    rest = dims[1:]
    new_dims = (int(dim),) + rest
    if dim == old:
        return state
    keep = min(old, dim)
    if isinstance(state, HybridState):
        t = state.amplitudes.reshape((old, -1))
        out = np.zeros((dim, t.shape[1]), dtype=complex)
        out[:keep] = t[:keep]
        return HybridState(out.ravel(), new_dims)
    r = math.prod(rest)
    t = state.matrix.reshape(old, r, old, r)
    out = np.zeros((dim, r, dim, r), dtype=complex)
    out[:keep, :, :keep, :] = t[:keep, :, :keep, :]
    n = dim * r
    return DensityState(out.reshape(n, n), new_dims)


def support_dim(state: State, tol: float = 1e-14, minimum: int = 2) -> int:
    """Smallest magnon cutoff whose discarded tail carries less than ``tol`` population."""
    pops = populations(state)
    tail = np.cumsum(pops[::-1])[::-1]
    inside = np.nonzero(tail >= tol)[0]
    n = int(inside[-1]) + 1 if inside.size else 1
    return max(minimum, n)


# ---------------------------------------------------------------------------
# measurements and reductions

def expectation(state: State, op: Operator) -> complex:
    if state.space_dims != op.space_dims:
        raise DimensionError(f"state dims {state.space_dims} vs operator dims {op.space_dims}")
    if isinstance(state, HybridState):
        return complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    return complex(np.einsum("ij,ji->", state.matrix, op.matrix))


def _outcome_index(outcome) -> int:
    if outcome in (0, 1):
        return int(outcome)
    try:
        return QUBIT_LEVELS[outcome]
    except (KeyError, TypeError):
        raise ValueError(f"qubit outcome must be 'g' or 'e', got {outcome!r}") from None


def project_qubit(state: State, outcome="g") -> tuple[State, float]:
    """Project the last (qubit) factor on |g> or |e>; returns the renormalized state and Born probability."""
    dims = state.space_dims
    if dims[-1] != 2:
        raise DimensionError(f"last factor of {dims} is not a qubit")
    s = _outcome_index(outcome)
    rest = math.prod(dims[:-1])
    if isinstance(state, HybridState):
        t = np.zeros((rest, 2), dtype=complex)
        t[:, s] = state.amplitudes.reshape(rest, 2)[:, s]
        prob = float(np.sum(np.abs(t) ** 2))
        if prob < IMPOSSIBLE_OUTCOME_TOL:
            raise ImpossibleOutcomeError(f"outcome {outcome!r} has probability {prob:.3e}")
        return HybridState(t.ravel() / math.sqrt(prob), dims), prob
    t = np.zeros((rest, 2, rest, 2), dtype=complex)
    t[:, s, :, s] = state.matrix.reshape(rest, 2, rest, 2)[:, s, :, s]
    prob = float(np.real(np.trace(t[:, s, :, s])))
    if prob < IMPOSSIBLE_OUTCOME_TOL:
        raise ImpossibleOutcomeError(f"outcome {outcome!r} has probability {prob:.3e}")
    n = rest * 2
    return DensityState(t.reshape(n, n) / prob, dims), prob


def partial_trace_qubit(state: State) -> DensityState:
    dims = state.space_dims
    if len(dims) < 2 or dims[-1] != 2:
        raise DimensionError(f"{dims} has no trailing qubit factor")
    if isinstance(state, HybridState):
        state = state.to_density()
    rest = math.prod(dims[:-1])
    reduced = np.einsum("isjs->ij", state.matrix.reshape(rest, 2, rest, 2))
    return DensityState(reduced, dims[:-1])


def magnon_part(state: State, tol: float = 1e-10) -> State:
    """Magnon reduced state: a vector when the qubit factorizes out, else a density matrix."""
    dims = state.space_dims
    if len(dims) == 1:
        return state
    if isinstance(state, HybridState):
        t = state.amplitudes.reshape(-1, 2)
        u, s, vh = np.linalg.svd(t, full_matrices=False)
        if s[1] <= tol * max(s[0], 1e-300):
            return HybridState(u[:, 0] * s[0], dims[:-1])
    return partial_trace_qubit(state)


def fidelity(a: State, b: State) -> float:
    """Overlap fidelity; pure-vs-mixed is <psi|rho|psi>, mixed-vs-mixed is Uhlmann's (squared) form."""
    if a.space_dims != b.space_dims:
        raise DimensionError(f"{a.space_dims} vs {b.space_dims}")
    if isinstance(a, HybridState) and isinstance(b, HybridState):
        val = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2 / (a.norm ** 2 * b.norm ** 2)
    elif isinstance(a, HybridState) or isinstance(b, HybridState):
        psi, rho = (a, b) if isinstance(a, HybridState) else (b, a)
        val = np.real(np.vdot(psi.amplitudes, rho.matrix @ psi.amplitudes)) / psi.norm ** 2
    else:
        w, v = np.linalg.eigh(0.5 * (a.matrix + a.matrix.conj().T))
        sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
        inner = sq @ b.matrix @ sq
        lam = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
        val = float(np.sum(np.sqrt(np.clip(lam, 0, None)))) ** 2
    return float(min(1.0, max(0.0, val)))
