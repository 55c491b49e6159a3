"""Kraus channels and constructors for the benchmark input states.

Basis convention: |0> is horizontal polarization (H), |1> is vertical (V).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    DensityMatrix,
    PureState,
    StateError,
    ghz_vector,
    ket,
    tensor_product,
)

CPTP_TOL = 1e-9

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def embed_left(states: np.ndarray, op: np.ndarray, qubits, n: int) -> np.ndarray:
    """Left-multiply a batch of row-indexed arrays by ``op`` acting on ``qubits``.

    ``states`` has shape ``(B, 2**n, C)``; ``op`` is ``(2**k, 2**k)`` or a
    batch ``(B, 2**k, 2**k)``. Returns the same shape as ``states``.
    """
    k = len(qubits)
    b, d, c = states.shape
    q0 = qubits[0]
    if all(q == q0 + i for i, q in enumerate(qubits)):
        # contiguous ascending targets: a plain reshape exposes the acted-on axis
        t = states.reshape(b, 2**q0, 2**k, -1)
        if op.ndim == 3:
            op = op[:, None]
        return np.matmul(op, t).reshape(b, d, c)
    t = states.reshape((b,) + (2,) * n + (c,))
    src = [1 + q for q in qubits]
    dst = list(range(1, 1 + k))
    t = np.moveaxis(t, src, dst)
    shp = t.shape
    t = np.matmul(op, t.reshape(b, 2**k, -1)).reshape(shp)
    return np.moveaxis(t, dst, src).reshape(b, d, c)


@dataclass(frozen=True)
class KrausChannel:
    """CPTP map given by Kraus operators acting on ``qubits`` of a register."""

    operators: tuple
    qubits: tuple

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.operators)
        qubits = tuple(int(q) for q in self.qubits)
        if not ops:
            raise StateError("a channel needs at least one Kraus operator")
        d = 2 ** len(qubits)
        for k in ops:
            if k.shape != (d, d):
                raise StateError(f"Kraus operator shape {k.shape} does not act on {len(qubits)} qubits")
            k.flags.writeable = False
        total = sum(k.conj().T @ k for k in ops)
        err = np.max(np.abs(total - np.eye(d)))
        if err > CPTP_TOL:
            raise StateError(f"Kraus operators are not trace preserving (deviation {err:.3e})")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "qubits", qubits)

    def apply_array(self, rho: np.ndarray, n: int) -> np.ndarray:
        """Apply to a single ``(d, d)`` or batched ``(B, d, d)`` density array."""
        single = rho.ndim == 2
        r = rho[None] if single else rho
        out = np.zeros_like(r)
        for k in self.operators:
            x = embed_left(r, k, self.qubits, n)
            x = embed_left(np.conj(np.swapaxes(x, 1, 2)), k, self.qubits, n)
            out += np.conj(np.swapaxes(x, 1, 2))
        return out[0] if single else out


def apply_kraus(ch: KrausChannel, rho: DensityMatrix) -> DensityMatrix:
    if max(ch.qubits) >= rho.num_qubits:
        raise IndexError(f"channel acts on {ch.qubits}, state has {rho.num_qubits} qubits")
    return DensityMatrix(rho.num_qubits, ch.apply_array(rho.matrix, rho.num_qubits))


def identity_channel(target: int = 0) -> KrausChannel:
    return KrausChannel((_I2,), (target,))


def depolarizing_channel(p: float, target: int = 0) -> KrausChannel:
    """rho -> (1 - p) rho + p I/2 on one qubit."""
    _check_p(p)
    ops = (np.sqrt(1 - 3 * p / 4) * _I2,) + tuple(np.sqrt(p / 4) * m for m in (_X, _Y, _Z))
    return KrausChannel(ops, (target,))


def phase_damping_channel(lam: float, target: int = 0) -> KrausChannel:
    """Kraus {sqrt(lam) I, sqrt(1 - lam) Z}; off-diagonals scale by 2 lam - 1."""
    _check_p(lam)
    return KrausChannel((np.sqrt(lam) * _I2, np.sqrt(1 - lam) * _Z), (target,))


def full_dephasing_channel(target: int = 0) -> KrausChannel:
    return phase_damping_channel(0.5, target)


def dephasing_generator_channel(p: float, target: int = 0) -> KrausChannel:
    """Phase damping matched to the rho_S noise map.

    The rho_S map turns the 1/2 coherence of psi_S into 1/2 - (1 - p), a factor
    of 1 - 2(1 - p) = 2p - 1, which phase damping reaches at lam = p.
    """
    return phase_damping_channel(p, target)


def rho_e_channel(p: float, qubits=(0, 1)) -> KrausChannel:
    """Kraus form of the rho_E noise map on the two-qubit span of psi_E.

    Maps |psi_E><psi_E| to p |psi_E><psi_E| + (1 - p)(|00><00| + |11><11|)/2.
    """
    _check_p(p)
    q = np.sqrt(1 - p)
    k0 = np.sqrt(p) * np.eye(4)
    k1 = q * np.outer(ket("00"), ket("01"))
    k2 = q * np.outer(ket("11"), ket("10"))
    k3 = q * (np.outer(ket("00"), ket("00")) + np.outer(ket("11"), ket("11")))
    return KrausChannel((k0, k1, k2, k3), tuple(qubits))


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise parameter must lie in [0, 1], got {p}")


def psi_s() -> np.ndarray:
    return (ket("00") + ket("10")) / np.sqrt(2)


def psi_e() -> np.ndarray:
    return (ket("01") + ket("10")) / np.sqrt(2)


def build_rho_s(p: float) -> DensityMatrix:
    """|psi_S><psi_S| - (1 - p)(|H><V| + |V><H|) (x) |H><H|, taken literally."""
    _check_p(p)
    v = psi_s()
    flip = np.array([[0, 1], [1, 0]], dtype=complex)
    hh = np.array([[1, 0], [0, 0]], dtype=complex)
    m = np.outer(v, v.conj()) - (1 - p) * np.kron(flip, hh)
    return DensityMatrix(2, m)


def build_rho_e(p: float) -> DensityMatrix:
    _check_p(p)
    v = psi_e()
    classical = (np.outer(ket("00"), ket("00")) + np.outer(ket("11"), ket("11"))) / 2
    return DensityMatrix(2, p * np.outer(v, v.conj()) + (1 - p) * classical)


def ghz_density(n: int) -> DensityMatrix:
    return PureState(n, ghz_vector(n)).density()


def build_pure_benchmarks() -> dict[str, DensityMatrix]:
    return {
        "rho_g23": tensor_product(ghz_density(2), ghz_density(3)),
        "rho_g5": ghz_density(5),
    }


def build_state(kind: str, **kwargs) -> DensityMatrix:
    """Named benchmark-state builder, e.g. ``build_state("rho_e", p=0.8)``."""
    kind = kind.lower()
    if kind == "rho_s":
        return build_rho_s(float(kwargs.get("p", 0.8)))
    if kind == "rho_e":
        return build_rho_e(float(kwargs.get("p", 0.8)))
    if kind in ("rho_g23", "rho_g5"):
        return build_pure_benchmarks()[kind]
    if kind == "ghz":
        return ghz_density(int(kwargs.get("n", 2)))
    if kind == "maximally_mixed":
        return DensityMatrix.maximally_mixed(int(kwargs.get("n", 2)))
    raise KeyError(f"unknown state kind {kind!r}")


__all__ = [
    "KrausChannel",
    "apply_kraus",
    "build_pure_benchmarks",
    "build_rho_e",
    "build_rho_s",
    "build_state",
    "dephasing_generator_channel",
    "depolarizing_channel",
    "full_dephasing_channel",
    "identity_channel",
    "phase_damping_channel",
    "rho_e_channel",
]
