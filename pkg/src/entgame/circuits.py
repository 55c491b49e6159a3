"""Parameterized circuits, batched simulation, and separability-constrained generators.

Every public application routine also has a batched ``*_batch`` sibling that
takes a ``(B, P)`` parameter array; the game engine evaluates all parameter
shifts of one gradient in a single batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .channels import KrausChannel, dephasing_generator_channel, embed_left
from .linalg import (
    Bipartition,
    DensityMatrix,
    DimensionError,
    PureState,
    _check_cap,
    partial_transpose_array,
)

ARITY = {"RX": 1, "RY": 1, "RZ": 1, "U3": 1, "H": 1, "X": 1, "CZ": 2, "CNOT": 2, "CU3": 2}
N_PARAMS = {"RX": 1, "RY": 1, "RZ": 1, "U3": 3, "CU3": 3, "H": 0, "X": 0, "CZ": 0, "CNOT": 0}

# Shift rules, as (coefficient, shift) pairs: d/dx f = sum c * f(x + s).
TWO_TERM = ((0.5, np.pi / 2), (-0.5, -np.pi / 2))
_C1 = (np.sqrt(2) + 1) / (4 * np.sqrt(2))
_C2 = (np.sqrt(2) - 1) / (4 * np.sqrt(2))
# controlled rotations have frequencies {1/2, 1}
FOUR_TERM = ((_C1, np.pi / 2), (-_C1, -np.pi / 2), (-_C2, 3 * np.pi / 2), (_C2, -3 * np.pi / 2))
SHIFT_RULES = {"two": TWO_TERM, "four": FOUR_TERM}


class CircuitError(ValueError):
    pass


class SeparabilityError(CircuitError):
    pass


@dataclass(frozen=True)
class Gate:
    """One gate. ``params`` entries are slot names (str) or fixed angles (float)."""

    kind: str
    qubits: tuple
    params: tuple = ()

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in ARITY:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        if len(qubits) != ARITY[kind]:
            raise CircuitError(f"{kind} acts on {ARITY[kind]} qubit(s), got {qubits}")
        if len(set(qubits)) != len(qubits):
            raise CircuitError(f"{kind} repeats a qubit: {qubits}")
        params = tuple(p if isinstance(p, str) else float(p) for p in self.params)
        if len(params) != N_PARAMS[kind]:
            raise CircuitError(f"{kind} takes {N_PARAMS[kind]} parameter(s), got {len(params)}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", qubits)
        object.__setattr__(self, "params", params)

    @property
    def slots(self) -> list[str]:
        return [p for p in self.params if isinstance(p, str)]

    @property
    def is_parameterized(self) -> bool:
        return bool(self.slots)

    def to_json_obj(self) -> dict:
        return {"kind": self.kind, "qubits": list(self.qubits), "params": list(self.params)}

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "Gate":
        return cls(obj["kind"], tuple(obj["qubits"]), tuple(obj.get("params", ())))


def _rot_batch(kind: str, ang: np.ndarray) -> np.ndarray:
    """Batched 2x2 (or 4x4 for CU3) matrices; ``ang`` has shape (B, n_params)."""
    b = ang.shape[0]
    if kind in ("RX", "RY", "RZ"):
        t = ang[:, 0] / 2
        c, s = np.cos(t), np.sin(t)
        m = np.zeros((b, 2, 2), dtype=complex)
        if kind == "RX":
            m[:, 0, 0] = m[:, 1, 1] = c
            m[:, 0, 1] = m[:, 1, 0] = -1j * s
        elif kind == "RY":
            m[:, 0, 0] = m[:, 1, 1] = c
            m[:, 0, 1] = -s
            m[:, 1, 0] = s
        else:
            m[:, 0, 0] = np.exp(-1j * t)
            m[:, 1, 1] = np.exp(1j * t)
        return m
    theta, phi, lam = ang[:, 0], ang[:, 1], ang[:, 2]
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    u = np.empty((b, 2, 2), dtype=complex)
    u[:, 0, 0] = c
    u[:, 0, 1] = -np.exp(1j * lam) * s
    u[:, 1, 0] = np.exp(1j * phi) * s
    u[:, 1, 1] = np.exp(1j * (phi + lam)) * c
    if kind == "U3":
        return u
    m = np.zeros((b, 4, 4), dtype=complex)
    m[:, 0, 0] = m[:, 1, 1] = 1.0
    m[:, 2:, 2:] = u
    return m


_FIXED = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
}


@dataclass(frozen=True)
class ParamCircuit:
    """Ordered gate list over a fixed register.

    Each named slot feeds exactly one gate angle, so a shift of one parameter
    shifts exactly one rotation.
    """

    num_qubits: int
    gates: tuple
    param_names: tuple = ()

    def __post_init__(self):
        gates = tuple(g if isinstance(g, Gate) else Gate(**g) for g in self.gates)
        seen: list[str] = []
        for i, g in enumerate(gates):
            if any(q >= self.num_qubits or q < 0 for q in g.qubits):
                raise CircuitError(f"gate {i} ({g.kind}) uses qubits {g.qubits} outside 0..{self.num_qubits - 1}")
            for s in g.slots:
                if s in seen:
                    raise CircuitError(f"slot {s!r} feeds more than one gate angle")
                seen.append(s)
        names = tuple(self.param_names) or tuple(seen)
        if len(set(names)) != len(names):
            raise CircuitError("duplicate parameter names")
        missing = set(seen) - set(names)
        if missing:
            raise CircuitError(f"slots not in the parameter list: {sorted(missing)}")
        object.__setattr__(self, "gates", gates)
        object.__setattr__(self, "param_names", names)
        index = {n: i for i, n in enumerate(names)}
        ops = []
        rules = ["two"] * len(names)
        for g in gates:
            if g.kind in _FIXED:
                ops.append((g.kind, g.qubits, None, None))
                continue
            idx = np.array([index[p] if isinstance(p, str) else -1 for p in g.params])
            fixed = np.array([0.0 if isinstance(p, str) else p for p in g.params])
            ops.append((g.kind, g.qubits, idx, fixed))
            if g.kind == "CU3" and isinstance(g.params[0], str):
                rules[index[g.params[0]]] = "four"
        object.__setattr__(self, "_ops", tuple(ops))
        object.__setattr__(self, "_rules", tuple(rules))

    @property
    def num_params(self) -> int:
        return len(self.param_names)

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    def shift_rules(self) -> tuple:
        """Per-parameter shift-rule name: 'two' for plain rotations, 'four' for CU3 theta."""
        return self._rules

    def gate_counts(self) -> dict:
        out = {"param_1q": 0, "fixed_1q": 0}
        for g in self.gates:
            if ARITY[g.kind] == 1:
                out["param_1q" if g.is_parameterized else "fixed_1q"] += 1
            else:
                out[g.kind] = out.get(g.kind, 0) + 1
        return out

    def check_params(self, params) -> np.ndarray:
        p = np.asarray(params, dtype=float)
        if p.shape[-1] != self.num_params:
            raise CircuitError(f"expected {self.num_params} parameters, got {p.shape[-1]}")
        if not np.all(np.isfinite(p)):
            raise CircuitError("non-finite parameter value")
        return p

    def bind(self, values: Mapping[str, float]) -> np.ndarray:
        try:
            return np.array([float(values[n]) for n in self.param_names])
        except KeyError as exc:
            raise CircuitError(f"unbound slot {exc.args[0]!r}") from exc

    def _gate_batch(self, op, params_b: np.ndarray) -> np.ndarray:
        kind, _, idx, fixed = op
        if idx is None:
            return _FIXED[kind][None]
        if not np.any(idx >= 0):
            return _rot_batch(kind, fixed[None])
        ang = np.where(idx >= 0, params_b[:, np.maximum(idx, 0)], fixed)
        return _rot_batch(kind, ang)

    def apply_batch(self, params_b: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Apply the circuit for each row of ``params_b`` to ``states`` of shape (B|1, d, C)."""
        params_b = np.atleast_2d(self.check_params(params_b))
        b = params_b.shape[0]
        out = np.broadcast_to(states, (b,) + states.shape[1:]).copy() if states.shape[0] != b else states
        for op in self._ops:
            out = embed_left(out, self._gate_batch(op, params_b), op[1], self.num_qubits)
        return out

    def unitary_batch(self, params_b) -> np.ndarray:
        eye = np.eye(self.dim, dtype=complex)[None]
        return self.apply_batch(params_b, eye)

    def unitary(self, params) -> np.ndarray:
        return self.unitary_batch(np.atleast_2d(params))[0]

    def to_json_obj(self) -> list:
        return [g.to_json_obj() for g in self.gates]

    def dumps(self) -> str:
        return json.dumps(
            {"num_qubits": self.num_qubits, "param_names": list(self.param_names), "gates": self.to_json_obj()}
        )

    @classmethod
    def loads(cls, text: str) -> "ParamCircuit":
        obj = json.loads(text)
        gates = tuple(Gate.from_json_obj(g) for g in obj["gates"])
        return cls(int(obj["num_qubits"]), gates, tuple(obj.get("param_names", ())))


def gate_matrix(g: Gate, params: Mapping[str, float] | None = None) -> np.ndarray:
    params = params or {}
    if g.kind in _FIXED:
        return _FIXED[g.kind].copy()
    try:
        ang = np.array([[params[p] if isinstance(p, str) else p for p in g.params]], dtype=float)
    except KeyError as exc:
        raise CircuitError(f"unbound slot {exc.args[0]!r}") from exc
    return _rot_batch(g.kind, ang)[0]


def apply_circuit_pure(c: ParamCircuit, params, state: PureState) -> PureState:
    if state.num_qubits != c.num_qubits:
        raise DimensionError(f"circuit has {c.num_qubits} qubits, state has {state.num_qubits}")
    out = c.apply_batch(np.atleast_2d(params), state.amplitudes.reshape(1, -1, 1))[0, :, 0]
    return PureState(c.num_qubits, out / np.linalg.norm(out))


def apply_circuit_density(c: ParamCircuit, params, rho: DensityMatrix) -> DensityMatrix:
    if rho.num_qubits != c.num_qubits:
        raise DimensionError(f"circuit has {c.num_qubits} qubits, state has {rho.num_qubits}")
    u = c.unitary(params)
    return DensityMatrix(c.num_qubits, u @ rho.matrix @ u.conj().T)


def random_params(c_or_n, rng: np.random.Generator) -> np.ndarray:
    """Uniform angles in [0, 2 pi)."""
    n = c_or_n if isinstance(c_or_n, int) else c_or_n.num_params
    return rng.uniform(0.0, 2 * np.pi, size=n)


# --- generators ------------------------------------------------------------


@dataclass
class SeparabilityReport:
    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"gate {i} ({k} on {q}) spans the cut" for i, k, q in self.violations)


@dataclass(frozen=True)
class GeneratorSpec:
    """Separable-state generator.

    System qubits are ``0..N-1``; qubits ``N..N'-1`` are ancillas, each
    assigned to side ``"A"`` or ``"B"`` and traced out at the end. The optional
    channel acts on the full register before the trace. With ``branches > 1``
    the output is a convex mixture of that many independently parameterized
    copies of the circuit, weighted by ``branches - 1`` mixing angles.
    """

    circuit: ParamCircuit
    bipartition: Bipartition
    ancilla_sides: Mapping = field(default_factory=dict)
    channel: KrausChannel | None = None
    branches: int = 1

    def __post_init__(self):
        n_sys = self.bipartition.num_qubits
        anc = {int(q): str(s).upper() for q, s in dict(self.ancilla_sides).items()}
        if sorted(anc) != list(range(n_sys, self.circuit.num_qubits)):
            raise CircuitError(
                f"ancillas {sorted(anc)} must be exactly qubits {n_sys}..{self.circuit.num_qubits - 1}"
            )
        if any(s not in ("A", "B") for s in anc.values()):
            raise CircuitError("ancilla side must be 'A' or 'B'")
        if self.branches < 1:
            raise CircuitError("branches must be >= 1")
        object.__setattr__(self, "ancilla_sides", anc)

    @property
    def num_system(self) -> int:
        return self.bipartition.num_qubits

    @property
    def traced_qubits(self) -> tuple:
        return tuple(sorted(self.ancilla_sides))

    @property
    def num_params(self) -> int:
        return self.branches * self.circuit.num_params + self.branches - 1

    @property
    def param_names(self) -> tuple:
        base = self.circuit.param_names
        if self.branches == 1:
            return base
        names = tuple(f"{n}#{b}" for b in range(self.branches) for n in base)
        return names + tuple(f"mix{j}" for j in range(self.branches - 1))

    def shift_rules(self) -> tuple:
        return self.circuit.shift_rules() * self.branches + ("two",) * (self.branches - 1)

    def side_qubits(self) -> dict:
        sides = {"A": set(self.bipartition.part_a), "B": set(self.bipartition.part_b)}
        for q, s in self.ancilla_sides.items():
            sides[s].add(q)
        return sides

    def mixture_weights(self, params_b: np.ndarray) -> np.ndarray:
        """Stick-breaking weights cos^2(a/2), sin^2(a/2) cos^2(b/2), ... per row."""
        b = params_b.shape[0]
        angles = params_b[:, self.branches * self.circuit.num_params :]
        w = np.ones((b, self.branches))
        rest = np.ones(b)
        for j in range(self.branches - 1):
            c2 = np.cos(angles[:, j] / 2) ** 2
            w[:, j] = rest * c2
            rest = rest * (1 - c2)
        w[:, -1] = rest
        return w

    def states_batch(self, params_b) -> np.ndarray:
        """Generated system density arrays, shape (B, 2^N, 2^N)."""
        params_b = np.atleast_2d(np.asarray(params_b, dtype=float))
        if params_b.shape[1] != self.num_params:
            raise CircuitError(f"expected {self.num_params} generator parameters, got {params_b.shape[1]}")
        c = self.circuit
        n_full, n_sys = c.num_qubits, self.num_system
        b = params_b.shape[0]
        p = c.num_params
        branch_params = params_b[:, : self.branches * p].reshape(b * self.branches, p)
        zero = np.zeros((1, c.dim, 1), dtype=complex)
        zero[0, 0, 0] = 1.0
        psi = c.apply_batch(branch_params, zero)[:, :, 0]
        d_sys, d_anc = 2**n_sys, 2 ** (n_full - n_sys)
        if self.channel is None:
            psi = psi.reshape(-1, d_sys, d_anc)
            rho = np.einsum("bia,bja->bij", psi, psi.conj())
        else:
            full = np.einsum("bi,bj->bij", psi, psi.conj())
            full = self.channel.apply_array(full, n_full)
            rho = np.einsum("biaja->bij", full.reshape(-1, d_sys, d_anc, d_sys, d_anc))
        rho = rho.reshape(b, self.branches, d_sys, d_sys)
        if self.branches == 1:
            return rho[:, 0]
        w = self.mixture_weights(params_b)
        return np.einsum("bk,bkij->bij", w, rho)


def validate_separability(spec: GeneratorSpec) -> SeparabilityReport:
    """Every multi-qubit gate (and the channel) must sit inside one extended side."""
    sides = spec.side_qubits()
    bad = []
    for i, g in enumerate(spec.circuit.gates):
        if len(g.qubits) > 1 and not any(set(g.qubits) <= s for s in sides.values()):
            bad.append((i, g.kind, g.qubits))
    if spec.channel is not None and len(spec.channel.qubits) > 1:
        if not any(set(spec.channel.qubits) <= s for s in sides.values()):
            bad.append(("channel", "KRAUS", spec.channel.qubits))
    return SeparabilityReport(not bad, bad)


def generate_state(spec: GeneratorSpec, params, max_qubits: int | None = None) -> DensityMatrix:
    report = validate_separability(spec)
    if not report:
        raise SeparabilityError(str(report))
    _check_cap(spec.circuit.num_qubits, max_qubits)
    rho = spec.states_batch(np.atleast_2d(params))[0]
    return DensityMatrix(spec.num_system, rho)


# --- presets ---------------------------------------------------------------


def _u3_layer(qubits, tag: str) -> list[Gate]:
    return [Gate("U3", (q,), (f"{tag}_q{q}_t", f"{tag}_q{q}_p", f"{tag}_q{q}_l")) for q in qubits]


def _zyz(qubits, tag: str) -> list[Gate]:
    out = []
    for q in qubits:
        out += [
            Gate("RZ", (q,), (f"{tag}_q{q}_z1",)),
            Gate("RY", (q,), (f"{tag}_q{q}_y",)),
            Gate("RZ", (q,), (f"{tag}_q{q}_z2",)),
        ]
    return out


def pure_generator_5q() -> GeneratorSpec:
    """Two blocks plus a closing U3 layer: 15 U3, 2 CZ, one controlled-U3 pair.

    No two-qubit gate crosses the {0,1}:{2,3,4} cut.
    """
    gates = _u3_layer(range(5), "g1")
    gates += [Gate("CZ", (0, 1)), Gate("CZ", (2, 3))]
    gates += _u3_layer(range(5), "g2")
    gates += [
        Gate("CU3", (3, 4), ("cu_a_t", "cu_a_p", "cu_a_l")),
        Gate("CU3", (2, 4), ("cu_b_t", "cu_b_p", "cu_b_l")),
    ]
    gates += _u3_layer(range(5), "g3")
    return GeneratorSpec(ParamCircuit(5, tuple(gates)), Bipartition((0, 1), (2, 3, 4)))


def pure_discriminator_5q() -> ParamCircuit:
    """12 single-axis rotations and one CZ across the cut, readout on qubit 2."""
    gates = _zyz((1, 2), "d1") + [Gate("CZ", (1, 2))] + _zyz((1, 2), "d2")
    return ParamCircuit(5, tuple(gates))


def mixed_generator_2q(p: float = 0.8) -> GeneratorSpec:
    """One block of 6 U3 (two per qubit) on 2 system qubits plus one ancilla, no
    two-qubit gates, followed by generator-side dephasing on qubit 0."""
    gates = _u3_layer(range(3), "g1") + _u3_layer(range(3), "g2")
    return GeneratorSpec(
        ParamCircuit(3, tuple(gates)),
        Bipartition((0,), (1,)),
        ancilla_sides={2: "B"},
        channel=dephasing_generator_channel(p, 0),
    )


def mixed_discriminator_2q() -> ParamCircuit:
    """Two blocks of Z-Y-Z rotations (12 gates) around one CZ, readout on qubit 1."""
    gates = _zyz((0, 1), "d1") + [Gate("CZ", (0, 1))] + _zyz((0, 1), "d2")
    return ParamCircuit(2, tuple(gates))


def deep_discriminator_2q(blocks: int = 3) -> ParamCircuit:
    """U3 layer + CZ repeated ``blocks`` times, then a closing U3 layer; readout on qubit 1.

    With three blocks the circuit reaches every two-qubit unitary, so M_D ranges
    over all rank-2 projectors. The single-CZ preset cannot express local terms
    on qubit 0 (its POVM elements have no A (x) I component).
    """
    if blocks < 1:
        raise CircuitError("need at least one block")
    gates: list[Gate] = []
    for b in range(blocks):
        gates += _u3_layer(range(2), f"d{b + 1}") + [Gate("CZ", (0, 1))]
    gates += _u3_layer(range(2), f"d{blocks + 1}")
    return ParamCircuit(2, tuple(gates))


def convex_generator_2q(branches: int = 4) -> GeneratorSpec:
    """Mixture of ``branches`` product pure states, one U3 per qubit in each.

    Four branches span every two-qubit separable state.
    """
    gates = _u3_layer(range(2), "g")
    return GeneratorSpec(ParamCircuit(2, tuple(gates)), Bipartition((0,), (1,)), branches=branches)


def ghz_preparation(n: int) -> ParamCircuit:
    gates = [Gate("H", (0,))] + [Gate("CNOT", (q, q + 1)) for q in range(n - 1)]
    return ParamCircuit(n, tuple(gates))


def psi_s_preparation() -> ParamCircuit:
    return ParamCircuit(2, (Gate("H", (0,)),))


def psi_e_preparation() -> ParamCircuit:
    return ParamCircuit(2, (Gate("H", (0,)), Gate("CNOT", (0, 1)), Gate("X", (1,))))


PRESETS = {
    "pure_generator_5q": pure_generator_5q,
    "pure_discriminator_5q": pure_discriminator_5q,
    "mixed_generator_2q": mixed_generator_2q,
    "mixed_discriminator_2q": mixed_discriminator_2q,
    "deep_discriminator_2q": deep_discriminator_2q,
    "convex_generator_2q": convex_generator_2q,
    "ghz_preparation": ghz_preparation,
    "psi_s_preparation": psi_s_preparation,
    "psi_e_preparation": psi_e_preparation,
}

# default readout qubit of each discriminator preset
READOUT = {"pure_discriminator_5q": 2, "mixed_discriminator_2q": 1, "deep_discriminator_2q": 1}


def preset_ansatz(name: str, *args, **kwargs):
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    return factory(*args, **kwargs)


def ppt_min_eigenvalue_array(rho: np.ndarray, part_b: Sequence[int]) -> float:
    return float(np.linalg.eigvalsh(partial_transpose_array(rho, part_b))[0])
