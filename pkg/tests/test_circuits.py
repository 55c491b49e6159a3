import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entgame.channels import build_rho_e, psi_e, psi_s
from entgame.circuits import (
    PRESETS,
    CircuitError,
    Gate,
    GeneratorSpec,
    ParamCircuit,
    SeparabilityError,
    apply_circuit_density,
    apply_circuit_pure,
    convex_generator_2q,
    deep_discriminator_2q,
    gate_matrix,
    generate_state,
    ghz_preparation,
    mixed_discriminator_2q,
    mixed_generator_2q,
    preset_ansatz,
    psi_e_preparation,
    psi_s_preparation,
    pure_discriminator_5q,
    pure_generator_5q,
    random_params,
    validate_separability,
)
from entgame.linalg import Bipartition, PureState, ghz_vector, partial_trace, partial_transpose

GENERATORS = ["pure_generator_5q", "mixed_generator_2q", "convex_generator_2q"]
CIRCUITS = ["pure_discriminator_5q", "mixed_discriminator_2q", "deep_discriminator_2q"]


def test_rotation_matrices():
    assert np.allclose(gate_matrix(Gate("RX", (0,), (np.pi,))), [[0, -1j], [-1j, 0]])
    assert np.allclose(gate_matrix(Gate("RY", (0,), (np.pi,))), [[0, -1], [1, 0]])
    assert np.allclose(gate_matrix(Gate("RZ", (0,), (np.pi,))), np.diag([-1j, 1j]))
    # U3(pi/2, 0, pi) is the Hadamard
    assert np.allclose(gate_matrix(Gate("U3", (0,), (np.pi / 2, 0.0, np.pi))), np.array([[1, 1], [1, -1]]) / np.sqrt(2))


def test_cu3_is_controlled():
    u3 = gate_matrix(Gate("U3", (0,), (0.3, 1.1, -0.4)))
    cu = gate_matrix(Gate("CU3", (0, 1), (0.3, 1.1, -0.4)))
    assert np.allclose(cu[:2, :2], np.eye(2))
    assert np.allclose(cu[2:, 2:], u3)
    assert np.allclose(cu[:2, 2:], 0)


def test_gate_validation():
    with pytest.raises(CircuitError):
        Gate("FOO", (0,))
    with pytest.raises(CircuitError):
        Gate("CZ", (0, 0))
    with pytest.raises(CircuitError):
        Gate("U3", (0,), ("a",))
    with pytest.raises(CircuitError):
        ParamCircuit(1, (Gate("RX", (0,), ("a",)), Gate("RY", (0,), ("a",))))
    with pytest.raises(CircuitError):
        ParamCircuit(1, (Gate("RX", (1,), ("a",)),))


def test_unbound_slot():
    with pytest.raises(CircuitError):
        gate_matrix(Gate("RX", (0,), ("a",)))
    c = ParamCircuit(1, (Gate("RX", (0,), ("a",)),))
    with pytest.raises(CircuitError):
        c.bind({})
    with pytest.raises(CircuitError):
        c.unitary([0.1, 0.2])


@pytest.mark.parametrize("name", CIRCUITS)
def test_unitarity(name):
    c = preset_ansatz(name)
    u = c.unitary(random_params(c, np.random.default_rng(0)))
    assert np.allclose(u @ u.conj().T, np.eye(c.dim), atol=1e-12)


def test_preset_gate_counts():
    g = pure_generator_5q()
    counts = g.circuit.gate_counts()
    assert counts["param_1q"] == 15 and counts["CZ"] == 2 and counts["CU3"] == 2
    assert g.num_params == 51
    assert pure_discriminator_5q().gate_counts() == {"param_1q": 12, "fixed_1q": 0, "CZ": 1}
    assert mixed_discriminator_2q().gate_counts() == {"param_1q": 12, "fixed_1q": 0, "CZ": 1}
    mg = mixed_generator_2q()
    assert mg.circuit.gate_counts() == {"param_1q": 6, "fixed_1q": 0}
    assert mg.num_system == 2 and mg.traced_qubits == (2,)
    assert deep_discriminator_2q().gate_counts() == {"param_1q": 8, "fixed_1q": 0, "CZ": 3}


def test_cu3_theta_uses_four_term_rule():
    rules = pure_generator_5q().shift_rules()
    names = pure_generator_5q().param_names
    assert {n for n, r in zip(names, rules) if r == "four"} == {"cu_a_t", "cu_b_t"}


def test_ghz_preparation():
    for n in (2, 3, 5):
        out = apply_circuit_pure(ghz_preparation(n), [], PureState.basis("0" * n))
        assert abs(np.vdot(ghz_vector(n), out.amplitudes)) ** 2 == pytest.approx(1.0, abs=1e-9)


def test_psi_preparations():
    s = apply_circuit_pure(psi_s_preparation(), [], PureState.basis("00")).amplitudes
    e = apply_circuit_pure(psi_e_preparation(), [], PureState.basis("00")).amplitudes
    assert np.allclose(s, psi_s()) and np.allclose(e, psi_e())


def test_discriminator_conjugation_keeps_spectrum():
    c = mixed_discriminator_2q()
    rho = build_rho_e(0.8)
    out = apply_circuit_density(c, random_params(c, np.random.default_rng(4)), rho)
    assert np.allclose(np.linalg.eigvalsh(out.matrix), np.linalg.eigvalsh(rho.matrix), atol=1e-9)


def test_circuit_json_round_trip():
    c = pure_generator_5q().circuit
    back = ParamCircuit.loads(c.dumps())
    p = random_params(c, np.random.default_rng(1))
    assert back.param_names == c.param_names
    assert np.allclose(back.unitary(p), c.unitary(p))


def test_batch_matches_single():
    c = mixed_discriminator_2q()
    p = np.random.default_rng(2).uniform(0, 6, (4, c.num_params))
    ub = c.unitary_batch(p)
    for i in range(4):
        assert np.allclose(ub[i], c.unitary(p[i]))


@pytest.mark.parametrize("name", GENERATORS)
def test_presets_pass_validation(name):
    assert validate_separability(preset_ansatz(name)).ok


def test_validation_reports_crossing_gate():
    gates = (Gate("U3", (0,), ("a", "b", "c")), Gate("CZ", (0, 1)), Gate("CZ", (1, 2)))
    spec = GeneratorSpec(ParamCircuit(3, gates), Bipartition((0,), (1, 2)))
    report = validate_separability(spec)
    assert not report.ok
    assert report.violations == [(1, "CZ", (0, 1))]
    assert "gate 1" in str(report)
    with pytest.raises(SeparabilityError):
        generate_state(spec, [0.1, 0.2, 0.3])


def test_ancilla_side_extends_cut():
    gates = (Gate("U3", (1,), ("a", "b", "c")), Gate("CZ", (1, 2)))
    ok = GeneratorSpec(ParamCircuit(3, gates), Bipartition((0,), (1,)), {2: "B"})
    bad = GeneratorSpec(ParamCircuit(3, gates), Bipartition((0,), (1,)), {2: "A"})
    assert validate_separability(ok).ok and not validate_separability(bad).ok
    with pytest.raises(CircuitError):
        GeneratorSpec(ParamCircuit(3, gates), Bipartition((0,), (1,)), {})


def test_mixed_generator_at_zero_angles():
    spec = mixed_generator_2q(0.8)
    rho = generate_state(spec, np.zeros(spec.num_params))
    assert rho.num_qubits == 2
    assert np.linalg.eigvalsh(partial_transpose(rho, spec.bipartition))[0] >= -1e-9


def test_mixture_weights_sum_to_one():
    spec = convex_generator_2q(5)
    p = np.random.default_rng(3).uniform(0, 6, (7, spec.num_params))
    w = spec.mixture_weights(p)
    assert np.allclose(w.sum(axis=1), 1) and np.all(w >= 0)


def test_pure_generator_cut_marginals_have_no_negativity():
    spec = pure_generator_5q()
    rng = np.random.default_rng(8)
    for _ in range(5):
        rho = generate_state(spec, random_params(spec.num_params, rng))
        for a in (0, 1):
            for b in (2, 3, 4):
                red = partial_trace(rho, [q for q in range(5) if q not in (a, b)])
                assert np.linalg.eigvalsh(partial_transpose(red, Bipartition((0,), (1,))))[0] >= -1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), name=st.sampled_from(["mixed_generator_2q", "convex_generator_2q"]))
def test_generated_states_are_ppt(seed, name):
    spec = preset_ansatz(name)
    rho = generate_state(spec, random_params(spec.num_params, np.random.default_rng(seed)))
    assert np.linalg.eigvalsh(partial_transpose(rho, spec.bipartition))[0] >= -1e-9


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset_ansatz("nope")
    assert "deep_discriminator_2q" in PRESETS
