"""Classical reference checks: PPT, the GHZ fidelity witness, random states and
the game-vs-PPT confusion benchmark."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .channels import build_rho_e, build_rho_s
from .circuits import GeneratorSpec, preset_ansatz, READOUT
from .game import Discriminator, GameConfig, detect
from .linalg import (
    Bipartition,
    DensityMatrix,
    DimensionError,
    ghz_vector,
    partial_transpose,
)

PPT_TOL = 1e-9
BOUNDARY_GUARD = 0.05


@dataclass(frozen=True)
class WitnessOperator:
    """W_N = I/2 - |G_N><G_N|; a negative expectation certifies entanglement."""

    n: int

    @property
    def matrix(self) -> np.ndarray:
        g = ghz_vector(self.n)
        return 0.5 * np.eye(2**self.n) - np.outer(g, g.conj())

    def value(self, rho: DensityMatrix) -> float:
        if rho.num_qubits != self.n:
            raise DimensionError(f"witness on {self.n} qubits, state has {rho.num_qubits}")
        g = ghz_vector(self.n)
        return float(0.5 - np.real(g.conj() @ rho.matrix @ g))


def witness_value(rho: DensityMatrix, witness: WitnessOperator | None = None) -> float:
    w = witness or WitnessOperator(rho.num_qubits)
    return w.value(rho)


def ppt_verdict(rho: DensityMatrix, cut: Bipartition) -> tuple[float, str]:
    """Smallest partial-transpose eigenvalue and ``"entangled"`` or ``"ppt"``.

    For 2x2 and 2x3 cuts ``"ppt"`` means separable; for larger cuts it only
    means the test is inconclusive.
    """
    lam = float(np.linalg.eigvalsh(partial_transpose(rho, cut))[0])
    return lam, "entangled" if lam < -PPT_TOL else "ppt"


def ppt_is_exact(cut: Bipartition) -> bool:
    dims = sorted((2 ** len(cut.part_a), 2 ** len(cut.part_b)))
    return dims[0] == 2 and dims[1] <= 3


def witness_sweep(family: str, grid: Sequence[float]) -> list[tuple[float, float]]:
    build = {"rho_s": build_rho_s, "rho_e": build_rho_e}[family]
    return [(float(p), witness_value(build(float(p)))) for p in grid]


def random_mixed_state(n: int, rank: int | None = None, seed=None) -> DensityMatrix:
    """Ginibre-induced state G G^dag / Tr(G G^dag) with G of shape 2^n x rank."""
    d = 2**n
    rank = d if rank is None else int(rank)
    if not 1 <= rank <= d:
        raise ValueError(f"rank must lie in 1..{d}, got {rank}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    m = g @ g.conj().T
    return DensityMatrix(n, m / np.trace(m).real)


def random_product_state(seed=None) -> DensityMatrix:
    """Two-qubit product of Ginibre single-qubit mixed states."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a = random_mixed_state(1, 2, rng)
    b = random_mixed_state(1, 2, rng)
    return DensityMatrix(2, np.kron(a.matrix, b.matrix))


# --- confusion benchmark ---------------------------------------------------


@dataclass(frozen=True)
class Sample:
    index: int
    min_pt_eigenvalue: float
    truth: str
    verdict: str
    window_gap: float


@dataclass
class ConfusionResult:
    tp: int
    fp: int
    tn: int
    fn: int
    seed: int
    config_hash: str
    samples: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else float("nan")

    def guarded_accuracy(self, guard: float = BOUNDARY_GUARD) -> float:
        kept = [s for s in self.samples if abs(s.min_pt_eigenvalue) > guard]
        if not kept:
            return float("nan")
        return sum(s.truth == s.verdict for s in kept) / len(kept)

    def to_json_obj(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "accuracy": self.accuracy,
            "boundary_guard": BOUNDARY_GUARD,
            "guarded_accuracy": self.guarded_accuracy(),
            "guarded_count": sum(abs(s.min_pt_eigenvalue) > BOUNDARY_GUARD for s in self.samples),
            "seed": self.seed,
            "config_hash": self.config_hash,
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "confusion.json").write_text(json.dumps(self.to_json_obj(), indent=2, sort_keys=True) + "\n")
        with open(out / "confusion_samples.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "min_pt_eigenvalue", "verdict", "ground_truth", "window_gap"])
            for s in self.samples:
                w.writerow([s.index, repr(s.min_pt_eigenvalue), s.verdict, s.truth, repr(s.window_gap)])


def _benchmark_sample(job) -> Sample:
    index, rho, gen_name, disc_name, cfg = job
    gen = preset_ansatz(gen_name)
    d = Discriminator(preset_ansatz(disc_name), READOUT.get(disc_name))
    cut = Bipartition((0,), (1,))
    lam, label = ppt_verdict(rho, cut)
    det = detect(rho, gen, d, cfg)
    v = det.verdict
    tr = next(t for vv, t in det.runs if vv is v)
    gap = float(np.max(np.abs(tr.loss[-cfg.window :] - 0.5)))
    truth = "entangled" if label == "entangled" else "separable"
    return Sample(index, lam, truth, v.label, gap)


def benchmark_states(samples: int, seed: int, ensemble: str = "ginibre") -> list[DensityMatrix]:
    """Seeded two-qubit inputs; one child stream per sample so prefixes agree."""
    children = np.random.SeedSequence(seed).spawn(samples)
    if ensemble == "ginibre":
        return [random_mixed_state(2, 4, np.random.default_rng(c)) for c in children]
    if ensemble == "product":
        return [random_product_state(np.random.default_rng(c)) for c in children]
    raise ValueError(f"unknown ensemble {ensemble!r}")


def confusion_matrix(
    samples: int,
    seed: int,
    cfg: GameConfig,
    generator: str = "convex_generator_2q",
    discriminator: str = "deep_discriminator_2q",
    ensemble: str = "ginibre",
    workers: int = 1,
) -> ConfusionResult:
    """Game verdicts against PPT ground truth on seeded random two-qubit states.

    Positive means entangled. Runs are independent; ``workers > 1`` fans them
    out over processes and the result does not depend on the worker count.
    """
    if samples < 1:
        raise ValueError("sample count must be positive")
    states = benchmark_states(samples, seed, ensemble)
    jobs = [(i, rho, generator, discriminator, cfg) for i, rho in enumerate(states)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_benchmark_sample, jobs))
    else:
        results = [_benchmark_sample(j) for j in jobs]
    counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for s in results:
        pos = s.verdict == "entangled"
        key = ("t" if pos == (s.truth == "entangled") else "f") + ("p" if pos else "n")
        counts[key] += 1
    return ConfusionResult(seed=seed, config_hash=cfg.digest(), samples=results, **counts)


__all__ = [
    "BOUNDARY_GUARD",
    "ConfusionResult",
    "Sample",
    "WitnessOperator",
    "benchmark_states",
    "confusion_matrix",
    "ppt_is_exact",
    "ppt_verdict",
    "random_mixed_state",
    "random_product_state",
    "witness_sweep",
    "witness_value",
]
