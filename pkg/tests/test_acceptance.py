"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the terminal
summary) or ``python tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest
from click.testing import CliRunner

from entgame.channels import build_pure_benchmarks, build_rho_e, build_rho_s
from entgame.circuits import (
    READOUT,
    Gate,
    GeneratorSpec,
    ParamCircuit,
    generate_state,
    preset_ansatz,
    validate_separability,
)
from entgame.cli import main
from entgame.game import Discriminator, GameConfig, detect, loss, shift_table, shifted_rows, combine_shifts, train
from entgame.linalg import Bipartition, fidelity, partial_trace, partial_transpose
from entgame.oracles import confusion_matrix, ppt_verdict, witness_value

RESULTS: dict[int, str] = {}
CUT2 = Bipartition((0,), (1,))


def report(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(RESULTS[n])
    assert ok, RESULTS[n]


def disc(name):
    return Discriminator(preset_ansatz(name), READOUT[name])


PURE = (preset_ansatz("pure_generator_5q"), disc("pure_discriminator_5q"))
MIXED = (preset_ansatz("mixed_generator_2q"), disc("mixed_discriminator_2q"))


@pytest.fixture(scope="module")
def runs():
    """All-restart detections shared by criteria 2, 3 and 4."""
    cfg = GameConfig()
    b = build_pure_benchmarks()
    cases = {
        "rho_g23": (b["rho_g23"], *PURE),
        "rho_g5": (b["rho_g5"], *PURE),
        "rho_s": (build_rho_s(0.8), *MIXED),
        "rho_e": (build_rho_e(0.8), *MIXED),
    }
    out, times = {}, {}
    for name, (rho, gen, d) in cases.items():
        t0 = time.perf_counter()
        out[name] = (rho, detect(rho, gen, d, cfg, stop_early=False))
        times[name] = time.perf_counter() - t0
    return out, times


def test_criterion_1_fixed_point():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    specs = [("convex_generator_2q", "deep_discriminator_2q")] * 8 + [("mixed_generator_2q", "mixed_discriminator_2q")] * 8
    specs += [("pure_generator_5q", "pure_discriminator_5q")] * 4
    worst = 0.0
    for gname, dname in specs:
        gen, d = preset_ansatz(gname), disc(dname)
        theta = rng.uniform(0, 2 * np.pi, gen.num_params)
        rho = generate_state(gen, theta)
        _, tr = train(rho, gen, d, GameConfig(iterations=10, seed=int(rng.integers(1 << 30))), theta0=theta)
        worst = max(worst, float(np.max(np.abs(tr.loss - 0.5))))
        for gamma in rng.uniform(0, 2 * np.pi, (25, d.num_params)):
            worst = max(worst, abs(loss(rho, rho, d, gamma) - 0.5))
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-10 and dt < 10, f"20 states, max |L - 1/2| = {worst:.2e}, {dt:.1f}s")


def test_criterion_2_separable_detection(runs):
    out, times = runs
    parts, ok = [], True
    for name in ("rho_g23", "rho_s"):
        det = out[name][1]
        n_sep = sum(v.separable and v.gap <= 0.02 for v, _ in det.runs)
        ok &= n_sep >= 2
        gaps = ",".join(f"{v.gap:.4f}" for v, _ in det.runs)
        parts.append(f"{name}: {n_sep}/3 separable (gaps {gaps}, {times[name]:.0f}s)")
    total = times["rho_g23"] + times["rho_s"]
    report(2, ok and total < 300, "; ".join(parts) + f"; total {total:.0f}s")


def test_criterion_3_entangled_detection(runs):
    out, times = runs
    parts, ok = [], True
    for name in ("rho_g5", "rho_e"):
        det = out[name][1]
        finals = [v.final_loss for v, _ in det.runs]
        ok &= det.verdict.label == "entangled" and max(finals) <= 0.45
        parts.append(f"{name}: {det.verdict.label}, final L {','.join(f'{x:.4f}' for x in finals)} ({times[name]:.0f}s)")
    total = times["rho_g5"] + times["rho_e"]
    report(3, ok and total < 300, "; ".join(parts) + f"; total {total:.0f}s")


def test_criterion_4_mixed_fidelity(runs):
    out, _ = runs
    rho_s, det_s = out["rho_s"]
    rho_e, det_e = out["rho_e"]
    f_s = fidelity(rho_s, det_s.best[1].final_state)
    f_e = [fidelity(rho_e, tr.final_state) for _, tr in det_e.runs]
    report(4, f_s >= 0.95 and max(f_e) <= 0.90, f"F(rho_S) = {f_s:.4f}; F(rho_E) max over restarts = {max(f_e):.4f}")


def test_criterion_5_witness_table():
    t0 = time.perf_counter()
    ws = witness_value(build_rho_s(0.8))
    we = witness_value(build_rho_e(0.8))
    lam, _ = ppt_verdict(build_rho_e(0.8), CUT2)
    dt = time.perf_counter() - t0
    ok = abs(ws - 0.25) <= 1e-9 and abs(we - 0.40) <= 1e-9 and abs(lam + 0.30) <= 1e-9 and dt < 1
    report(5, ok, f"W(rho_S) = {ws:.12f}, W(rho_E) = {we:.12f}, PPT min(rho_E) = {lam:.12f}")


def _observable(dim, rng):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (a + a.conj().T) / 2


def test_criterion_6_gradient_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    h = 1e-5
    worst = 0.0
    names = ["pure_generator_5q", "mixed_generator_2q", "convex_generator_2q"]
    names += ["pure_discriminator_5q", "mixed_discriminator_2q", "deep_discriminator_2q"]
    for name in names:
        obj = preset_ansatz(name)
        if isinstance(obj, GeneratorSpec):
            n_params, rules = obj.num_params, obj.shift_rules()
            o = _observable(2**obj.num_system, rng)
            f = lambda rows, obj=obj, o=o: np.einsum("ij,bji->b", o, obj.states_batch(rows)).real
        else:
            d = Discriminator(obj, READOUT[name])
            n_params, rules = d.num_params, obj.shift_rules()
            o = _observable(2**obj.num_qubits, rng)
            f = lambda rows, d=d, o=o: d.traces_batch(rows, o)
        table = shift_table(rules)
        eye = np.eye(n_params) * h
        for _ in range(100):
            p = rng.uniform(0, 2 * np.pi, n_params)
            g = combine_shifts(f(shifted_rows(p, table)), table)
            fd = (f(p + eye) - f(p - eye)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(g - fd))))
    dt = time.perf_counter() - t0
    report(6, worst <= 1e-6 and dt < 60, f"6 presets x 100 points, max |shift - FD| = {worst:.2e}, {dt:.1f}s")


def test_criterion_7_family_threshold():
    t0 = time.perf_counter()
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-9:
        mid = (lo + hi) / 2
        if ppt_verdict(build_rho_e(mid), CUT2)[1] == "entangled":
            hi = mid
        else:
            lo = mid
    gen, d = preset_ansatz("convex_generator_2q"), disc("deep_discriminator_2q")
    cfg = GameConfig()
    rows, ok = [], abs(hi - 0.5) <= 1e-6
    for p in (0.0, 0.2, 0.4, 0.7, 0.8, 0.9, 1.0):
        rho = build_rho_e(p)
        truth = "entangled" if ppt_verdict(rho, CUT2)[1] == "entangled" else "separable"
        v = detect(rho, gen, d, cfg).verdict
        ok &= v.label == truth
        rows.append(f"p={p}:{v.label[:3]}")
    dt = time.perf_counter() - t0
    ok &= dt < 600
    report(7, ok, f"PPT flip at p = {hi:.9f}; game " + " ".join(rows) + f" ({dt:.0f}s)")


@pytest.mark.slow
def test_criterion_8_confusion_benchmark():
    t0 = time.perf_counter()
    res = confusion_matrix(500, 0, GameConfig())
    dt = time.perf_counter() - t0
    acc, guarded = res.accuracy, res.guarded_accuracy()
    ok = acc >= 0.80 and guarded >= 0.95 and dt < 7200
    report(
        8,
        ok,
        f"TP={res.tp} FP={res.fp} TN={res.tn} FN={res.fn} accuracy={acc:.4f} "
        f"boundary-excluded={guarded:.4f} ({dt / 60:.1f} min)",
    )


def _two_qubit_cut_marginals(rho, cut):
    n = rho.num_qubits
    for a in cut.part_a:
        for b in cut.part_b:
            yield partial_trace(rho, [q for q in range(n) if q not in (a, b)])


def test_criterion_9_structural_separability():
    rng = np.random.default_rng(9)
    worst = np.inf
    for name in ("pure_generator_5q", "mixed_generator_2q", "convex_generator_2q"):
        spec = preset_ansatz(name)
        for _ in range(200):
            rho = generate_state(spec, rng.uniform(0, 2 * np.pi, spec.num_params))
            if rho.num_qubits == 2:
                worst = min(worst, ppt_verdict(rho, spec.bipartition)[0])
            else:
                for red in _two_qubit_cut_marginals(rho, spec.bipartition):
                    worst = min(worst, ppt_verdict(red, CUT2)[0])
    bad = GeneratorSpec(
        ParamCircuit(3, (Gate("U3", (0,), ("a", "b", "c")), Gate("CZ", (1, 2)), Gate("CZ", (0, 1)))),
        Bipartition((0,), (1, 2)),
    )
    rep = validate_separability(bad)
    ok = worst >= -1e-9 and not rep.ok and rep.violations == [(2, "CZ", (0, 1))]
    report(9, ok, f"min PT eigenvalue over 600 draws = {worst:.2e}; rejection: {rep}")


def test_criterion_10_determinism(tmp_path):
    runner = CliRunner()
    commands = [
        ["detect", "--seed", "7", "--set", "state.p=0.3", "--set", "game.iterations=100"],
        ["reproduce-mixed", "--seed", "7", "--set", "game.iterations=40", "--set", "game.restarts=1"],
        ["witness-sweep"],
        ["confusion", "--seed", "7", "--set", "confusion.samples=2", "--set", "game.iterations=60"],
    ]
    mismatched = []
    for i, cmd in enumerate(commands):
        dirs = [tmp_path / f"{i}{tag}" for tag in "ab"]
        for dd in dirs:
            res = runner.invoke(main, cmd + ["--out", str(dd)])
            assert res.exit_code in (0, 1), res.output
        files = sorted(p.name for p in dirs[0].iterdir())
        for name in files:
            if (dirs[0] / name).read_bytes() != (dirs[1] / name).read_bytes():
                mismatched.append(f"{cmd[0]}/{name}")
    report(10, not mismatched, f"{len(commands)} commands re-run, mismatched artifacts: {mismatched or 'none'}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v", "-s"]))
