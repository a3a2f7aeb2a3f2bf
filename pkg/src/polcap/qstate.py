"""Two-photon polarization states.

Every matrix lives in the diagonal polarization basis with the tensor
ordering ``|DD>, |DA>, |AD>, |AA>`` where ``D`` is the +45 degree
polarization and ``A`` the -45 degree one.  The horizontal/vertical basis
never appears in this package.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
# PSD slack absorbs round-off from ~1e4 chained 4x4 products.
PSD_SLACK = 1e-10
# Eigenvalues below this are treated as exact zeros in entropy sums.
EIGENVALUE_CLAMP = 1e-12
UNITARY_TOL = 1e-12

LABELS = ("parallel", "orthogonal", "triplet-plus", "singlet")
BASIS = ("DD", "DA", "AD", "AA")


class InvalidStateError(ValueError):
    """Raised when a matrix violates a density-operator or unitary invariant."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    """Validated 4x4 density operator for the joint polarization of a pair."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise InvalidStateError(f"state must be 4x4, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidStateError("state contains non-finite entries")
        herm = np.max(np.abs(m - m.conj().T))
        if herm > HERMITIAN_TOL:
            raise InvalidStateError(f"not Hermitian: max |rho - rho^dag| = {herm:.3e}")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"trace must be 1, got {tr.real:.15g}")
        lam_min = np.linalg.eigvalsh(m).min()
        if lam_min < -PSD_SLACK:
            raise InvalidStateError(f"not positive semidefinite: min eigenvalue {lam_min:.3e}")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def from_ket(cls, ket) -> "TwoQubitState":
        ket = np.asarray(ket, dtype=complex).reshape(4)
        ket = ket / np.linalg.norm(ket)
        return cls(np.outer(ket, ket.conj()))

    @classmethod
    def _unchecked(cls, matrix: np.ndarray) -> "TwoQubitState":
        # Internal fast path for results that are valid by construction,
        # e.g. unitary conjugates of an already validated state.  Tiny
        # anti-Hermitian round-off is symmetrized away.
        m = np.asarray(matrix, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        obj = object.__new__(cls)
        object.__setattr__(obj, "matrix", _frozen(m))
        return obj

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True, eq=False)
class PolarizationUnitary:
    """2x2 unitary acting on a single photon's polarization."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise InvalidStateError(f"unitary must be 2x2, got shape {m.shape}")
        err = np.max(np.abs(m.conj().T @ m - np.eye(2)))
        if err > UNITARY_TOL:
            raise InvalidStateError(f"not unitary: max |U^dag U - 1| = {err:.3e}")
        object.__setattr__(self, "matrix", _frozen(m))


def as_state(rho) -> TwoQubitState:
    if isinstance(rho, TwoQubitState):
        return rho
    return TwoQubitState(rho)


def as_unitary(u) -> PolarizationUnitary:
    if isinstance(u, PolarizationUnitary):
        return u
    return PolarizationUnitary(u)


# kets in the DD, DA, AD, AA ordering
_S2 = 1.0 / np.sqrt(2.0)
SINGLET_KET = np.array([0.0, _S2, -_S2, 0.0], dtype=complex)
_KETS = {
    "parallel": np.array([1.0, 0.0, 0.0, 0.0], dtype=complex),
    "orthogonal": np.array([0.0, 1.0, 0.0, 0.0], dtype=complex),
    "triplet-plus": np.array([_S2, 0.0, 0.0, _S2], dtype=complex),
    "singlet": SINGLET_KET,
}

SINGLET_PROJECTOR = _frozen(np.outer(SINGLET_KET, SINGLET_KET.conj()))
TRIPLET_PROJECTOR = _frozen(np.eye(4) - SINGLET_PROJECTOR)


def named_ket(label: str) -> np.ndarray:
    try:
        return _KETS[label].copy()
    except KeyError:
        raise InvalidStateError(
            f"unknown state label {label!r}; expected one of {', '.join(LABELS)}"
        ) from None


def make_named_state(label: str) -> TwoQubitState:
    """Pure-state density operator for one of the four experimental inputs."""
    ket = named_ket(label)
    return TwoQubitState(np.outer(ket, ket.conj()))


def maximally_mixed() -> TwoQubitState:
    return TwoQubitState(np.eye(4) / 4)


def werner_state(singlet_weight: float) -> TwoQubitState:
    """``F |singlet><singlet| + (1 - F) * triplet_projector / 3``."""
    f = float(singlet_weight)
    if not 0.0 <= f <= 1.0:
        raise InvalidStateError(f"singlet weight must lie in [0, 1], got {f}")
    return TwoQubitState(f * SINGLET_PROJECTOR + (1.0 - f) * TRIPLET_PROJECTOR / 3.0)


def singlet_fidelity(rho) -> float:
    """Weight of the antisymmetric subspace, ``<singlet|rho|singlet>``."""
    m = as_state(rho).matrix
    val = SINGLET_KET.conj() @ m @ SINGLET_KET
    if abs(val.imag) > 1e-12:
        raise InvalidStateError(f"singlet weight has imaginary part {val.imag:.3e}")
    return float(min(1.0, max(0.0, val.real)))


def collective_operator(u) -> np.ndarray:
    u = as_unitary(u).matrix
    return np.kron(u, u)


def apply_collective(rho, u) -> TwoQubitState:
    """Apply the same polarization unitary to both photons: (U x U) rho (U x U)^dag."""
    m = as_state(rho).matrix
    k = collective_operator(u)
    return TwoQubitState._unchecked(k @ m @ k.conj().T)


def apply_local(rho, u_first, u_second) -> TwoQubitState:
    m = as_state(rho).matrix
    k = np.kron(as_unitary(u_first).matrix, as_unitary(u_second).matrix)
    return TwoQubitState._unchecked(k @ m @ k.conj().T)


def von_neumann_entropy(rho) -> float:
    """Entropy in bits; eigenvalues under ``EIGENVALUE_CLAMP`` count as zero."""
    lam = np.linalg.eigvalsh(as_state(rho).matrix)
    lam = lam[lam > EIGENVALUE_CLAMP]
    return float(max(0.0, -np.sum(lam * np.log2(lam))))


def trace_distance(rho, sigma) -> float:
    """Half the sum of absolute eigenvalues of ``rho - sigma``."""
    a = np.asarray(rho.matrix if isinstance(rho, TwoQubitState) else rho, dtype=complex)
    b = np.asarray(sigma.matrix if isinstance(sigma, TwoQubitState) else sigma, dtype=complex)
    d = a - b
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


def quaternion_to_su2(q: np.ndarray) -> np.ndarray:
    """Map unit quaternions ``(..., 4)`` to SU(2) matrices ``(..., 2, 2)``."""
    q = np.asarray(q, dtype=float)
    a, b, c, d = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = a + 1j * b
    out[..., 0, 1] = c + 1j * d
    out[..., 1, 0] = -c + 1j * d
    out[..., 1, 1] = a - 1j * b
    return out


def haar_su2(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-random SU(2) matrices from uniformly distributed unit quaternions.

    A standard normal 4-vector normalized to unit length is uniform on the
    3-sphere, which is exactly the Haar measure on SU(2).
    """
    shape = (4,) if size is None else (size, 4)
    q = rng.standard_normal(shape)
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return quaternion_to_su2(q)


def haar_unitary(rng: np.random.Generator) -> PolarizationUnitary:
    return PolarizationUnitary(haar_su2(rng))


def half_wave_plate(angle: float) -> PolarizationUnitary:
    """Half-wave plate with its fast axis at ``angle`` from the D direction.

    Reflects the polarization about the axis, so D maps to the direction at
    ``2 * angle``; at 45 degrees it swaps D and A.
    """
    c, s = np.cos(2 * angle), np.sin(2 * angle)
    return PolarizationUnitary(np.array([[c, s], [s, -c]], dtype=complex))


def matrix_to_json(m) -> list:
    m = np.asarray(m.matrix if isinstance(m, TwoQubitState) else m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(data) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidStateError(f"matrix JSON is not a numeric array: {exc}") from None
    if arr.shape != (4, 4, 2):
        raise InvalidStateError(
            f"matrix JSON must be a 4x4 array of [re, im] pairs, got shape {arr.shape}"
        )
    return arr[..., 0] + 1j * arr[..., 1]


def load_state(path) -> TwoQubitState:
    with open(Path(path)) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidStateError(f"{path}: invalid JSON: {exc}") from None
    return TwoQubitState(matrix_from_json(data))


def save_state(rho, path) -> None:
    with open(Path(path), "w") as fh:
        json.dump(matrix_to_json(rho), fh)
