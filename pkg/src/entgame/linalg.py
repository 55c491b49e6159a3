"""Dense complex linear algebra and quantum-state primitives.

Qubit 0 is the most significant bit of a computational-basis index, so
``tensor_product(a, b)`` places ``a`` on the leading qubits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 12

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_SLACK = 1e-9
NORM_TOL = 1e-10


class StateError(ValueError):
    """Raised when an operator fails a quantum-state invariant."""


class DimensionError(ValueError):
    """Raised on mismatched or oversized dimensions."""


def _num_qubits_for(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 2**n != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return n


def _check_cap(n: int, max_qubits: int | None) -> None:
    cap = MAX_QUBITS if max_qubits is None else max_qubits
    if n > cap:
        raise DimensionError(f"{n} qubits exceeds the configured maximum of {cap}")


def as_matrix(m) -> np.ndarray:
    """Coerce ``m`` (array or DensityMatrix) into a finite 2-D complex array."""
    if isinstance(m, DensityMatrix):
        return m.matrix
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


@dataclass(frozen=True)
class PureState:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2**self.num_qubits:
            raise DimensionError(
                f"{amps.size} amplitudes for {self.num_qubits} qubits"
            )
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > NORM_TOL:
            raise StateError(f"state norm^2 is {norm}, expected 1")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amps, normalize: bool = False) -> "PureState":
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(_num_qubits_for(amps.size), amps)

    @classmethod
    def basis(cls, bits: str) -> "PureState":
        amps = np.zeros(2 ** len(bits), dtype=complex)
        amps[int(bits, 2) if bits else 0] = 1.0
        return cls(len(bits), amps)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(
            self.num_qubits, np.outer(self.amplitudes, self.amplitudes.conj())
        )


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite operator on ``num_qubits`` qubits.

    Eigenvalues in ``[-PSD_SLACK, 0)`` are clipped to zero on construction;
    anything more negative is rejected.
    """

    num_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = 2**self.num_qubits
        if m.shape != (d, d):
            raise DimensionError(f"matrix shape {m.shape} for {self.num_qubits} qubits")
        if not np.all(np.isfinite(m)):
            raise StateError("density matrix has non-finite entries")
        herm_err = np.max(np.abs(m - m.conj().T)) if d else 0.0
        if herm_err > HERMITIAN_TOL:
            raise StateError(f"not Hermitian (max deviation {herm_err:.3e})")
        m = 0.5 * (m + m.conj().T)
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise StateError(f"trace is {tr}, expected 1")
        w, v = np.linalg.eigh(m)
        if w[0] < -PSD_SLACK:
            raise StateError(f"negative eigenvalue {w[0]:.3e}")
        if w[0] < 0:
            w = np.clip(w, 0.0, None)
            m = (v * w) @ v.conj().T
            m = m / np.trace(m).real
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_array(cls, m) -> "DensityMatrix":
        m = as_matrix(m)
        return cls(_num_qubits_for(m.shape[0]), m)

    @classmethod
    def maximally_mixed(cls, num_qubits: int) -> "DensityMatrix":
        d = 2**num_qubits
        return cls(num_qubits, np.eye(d) / d)

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def __getitem__(self, idx):
        return self.matrix[idx]

    # JSON interchange: {num_qubits, re: [[...]], im: [[...]]}, row-major.
    def to_json_obj(self) -> dict:
        return {
            "num_qubits": self.num_qubits,
            "re": self.matrix.real.tolist(),
            "im": self.matrix.imag.tolist(),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DensityMatrix":
        try:
            n = int(obj["num_qubits"])
            m = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise StateError(f"malformed density-matrix object: {exc}") from exc
        return cls(n, m)

    def dumps(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def loads(cls, text: str) -> "DensityMatrix":
        return cls.from_json_obj(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "DensityMatrix":
        return cls.loads(Path(path).read_text())


@dataclass(frozen=True)
class Bipartition:
    part_a: tuple[int, ...]
    part_b: tuple[int, ...]

    def __post_init__(self):
        a = tuple(sorted(int(q) for q in self.part_a))
        b = tuple(sorted(int(q) for q in self.part_b))
        if not a or not b:
            raise ValueError("both sides of a bipartition must be non-empty")
        if set(a) & set(b):
            raise ValueError(f"parts overlap: {sorted(set(a) & set(b))}")
        if len(set(a)) != len(a) or len(set(b)) != len(b):
            raise ValueError("duplicate qubit index in bipartition")
        if sorted(a + b) != list(range(len(a) + len(b))):
            raise ValueError("bipartition must cover qubits 0..n-1 exactly once")
        object.__setattr__(self, "part_a", a)
        object.__setattr__(self, "part_b", b)

    @property
    def num_qubits(self) -> int:
        return len(self.part_a) + len(self.part_b)

    @classmethod
    def split(cls, n_a: int, n_total: int) -> "Bipartition":
        return cls(tuple(range(n_a)), tuple(range(n_a, n_total)))

    def side_of(self, q: int) -> str:
        if q in self.part_a:
            return "A"
        if q in self.part_b:
            return "B"
        raise IndexError(f"qubit {q} not in bipartition")


def ket(bits: str) -> np.ndarray:
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1.0
    return v


def ghz_vector(n: int) -> np.ndarray:
    v = np.zeros(2**n, dtype=complex)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return v


def tensor_product(a: DensityMatrix, b: DensityMatrix, max_qubits: int | None = None) -> DensityMatrix:
    n = a.num_qubits + b.num_qubits
    _check_cap(n, max_qubits)
    return DensityMatrix(n, np.kron(a.matrix, b.matrix))


def _partial_trace_array(m: np.ndarray, n: int, traced: Sequence[int]) -> np.ndarray:
    keep = [q for q in range(n) if q not in traced]
    t = m.reshape([2] * (2 * n))
    # contract row and column index of each traced qubit
    row_axes = list(range(n))
    col_axes = list(range(n, 2 * n))
    for q in traced:
        col_axes[q] = row_axes[q]
    out = keep + [n + q for q in keep]
    t = np.einsum(t, row_axes + col_axes, out)
    d = 2 ** len(keep)
    return t.reshape(d, d)


def partial_trace(rho: DensityMatrix, traced_qubits: Iterable[int]) -> DensityMatrix:
    traced = sorted(set(int(q) for q in traced_qubits))
    n = rho.num_qubits
    if any(q < 0 or q >= n for q in traced):
        raise IndexError(f"traced qubits {traced} out of range for {n} qubits")
    if len(traced) >= n:
        raise ValueError("cannot trace out every qubit")
    if not traced:
        return rho
    return DensityMatrix(n - len(traced), _partial_trace_array(rho.matrix, n, traced))


def partial_transpose_array(m: np.ndarray, transposed: Sequence[int]) -> np.ndarray:
    """Transpose the row/column indices of the given qubits of a 2^n x 2^n array."""
    n = _num_qubits_for(m.shape[0])
    t = m.reshape([2] * (2 * n))
    perm = list(range(2 * n))
    for q in transposed:
        perm[q], perm[n + q] = n + q, q
    return t.transpose(perm).reshape(m.shape)


def partial_transpose(rho: DensityMatrix, bipartition: Bipartition) -> np.ndarray:
    """Partial transpose on subsystem B. The result need not be PSD."""
    if bipartition.num_qubits != rho.num_qubits:
        raise DimensionError(
            f"bipartition covers {bipartition.num_qubits} qubits, state has {rho.num_qubits}"
        )
    return partial_transpose_array(rho.matrix, bipartition.part_b)


def eig_hermitian(m, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Ascending real eigenvalues and the matching unitary eigenvector matrix."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionError("matrix is not square")
    if np.max(np.abs(m - m.conj().T), initial=0.0) > tol:
        raise ValueError("matrix is not Hermitian")
    return np.linalg.eigh(0.5 * (m + m.conj().T))


def matrix_sqrt_psd(m, slack: float = PSD_SLACK) -> np.ndarray:
    w, v = eig_hermitian(m)
    if w.size and w[0] < -slack:
        raise ValueError(f"matrix is not PSD (eigenvalue {w[0]:.3e})")
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w) @ v.conj().T


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    a, b = as_matrix(rho), as_matrix(sigma)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    s = matrix_sqrt_psd(a)
    inner = s @ b @ s
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    f = float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)
    return min(max(f, 0.0), 1.0)


def trace_distance(rho, sigma) -> float:
    d = as_matrix(rho) - as_matrix(sigma)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))
