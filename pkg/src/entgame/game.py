"""The adversarial separability game.

The discriminator picks a two-outcome POVM element ``M = U (I (x) |0><0|) U^dag``
and the generator picks a separable state ``sigma``. The loss

    L = Tr(M rho)/2 + (1 - Tr(M sigma))/2

is minimized over the discriminator angles and maximized over the generator
angles. For separable ``rho`` the max-min value is exactly 1/2.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .circuits import (
    SHIFT_RULES,
    GeneratorSpec,
    ParamCircuit,
    SeparabilityError,
    validate_separability,
)
from .linalg import DensityMatrix, DimensionError, as_matrix, fidelity

PROB_TOL = 1e-9


class GameError(RuntimeError):
    """Raised when training diverges (non-finite gradients or losses)."""


@dataclass(frozen=True)
class Discriminator:
    """Circuit ``U_D`` plus the readout qubit carrying ``E = |0><0|``."""

    circuit: ParamCircuit
    readout: int | None = None

    def __post_init__(self):
        n = self.circuit.num_qubits
        r = n - 1 if self.readout is None else int(self.readout)
        if not 0 <= r < n:
            raise ValueError(f"readout qubit {r} outside 0..{n - 1}")
        object.__setattr__(self, "readout", r)
        cols = np.array([k for k in range(2**n) if not (k >> (n - 1 - r)) & 1])
        object.__setattr__(self, "_cols", cols)

    @property
    def num_qubits(self) -> int:
        return self.circuit.num_qubits

    @property
    def num_params(self) -> int:
        return self.circuit.num_params

    def isometry_batch(self, gammas) -> np.ndarray:
        """Columns of ``U_D`` spanning the range of ``M_D``; shape (B, d, d/2)."""
        return self.circuit.unitary_batch(np.atleast_2d(gammas))[:, :, self._cols]

    def povm(self, gamma) -> np.ndarray:
        v = self.isometry_batch(gamma)[0]
        return v @ v.conj().T

    def traces_batch(self, gammas, mat: np.ndarray) -> np.ndarray:
        """``Tr(M_D(gamma_b) mat)`` for every row of ``gammas``."""
        v = self.isometry_batch(gammas)
        return np.einsum("bik,ij,bjk->b", v.conj(), mat, v).real


def povm_element(d: Discriminator, gamma) -> np.ndarray:
    return d.povm(d.circuit.check_params(gamma))


def expectation(m, rho, shots: int = 0, rng: np.random.Generator | None = None) -> float:
    """Tr(M rho), or the mean of ``shots`` Bernoulli draws with that probability."""
    p = float(np.real(np.trace(as_matrix(m) @ as_matrix(rho))))
    return _sample(p, shots, rng)


def _sample(p: float, shots: int, rng) -> float:
    if shots < 0:
        raise ValueError("shots must be non-negative")
    if not -PROB_TOL <= p <= 1 + PROB_TOL:
        raise ValueError(f"Tr(M rho) = {p} is not a probability")
    p = min(max(p, 0.0), 1.0)
    if shots == 0:
        return p
    if rng is None:
        raise ValueError("shot sampling needs an rng")
    return rng.binomial(shots, p) / shots


def _check_dims(*mats) -> None:
    shapes = {as_matrix(m).shape for m in mats}
    if len(shapes) != 1:
        raise DimensionError(f"dimension mismatch: {sorted(shapes)}")


def loss(rho, sigma_g, d: Discriminator, gamma, shots: int = 0, rng=None) -> float:
    m = povm_element(d, gamma)
    _check_dims(rho, sigma_g, m)
    return 0.5 * expectation(m, rho, shots, rng) + 0.5 * (1.0 - expectation(m, sigma_g, shots, rng))


def measured_distance(rho, sigma_g, d: Discriminator, gamma) -> float:
    """Half the gap between the two measured probabilities."""
    m = povm_element(d, gamma)
    _check_dims(rho, sigma_g, m)
    return 0.5 * abs(expectation(m, sigma_g) - expectation(m, rho))


# --- parameter shift -------------------------------------------------------


def grad_parameter_shift(f: Callable[[np.ndarray], float], params, index: int, rule: str = "two") -> float:
    """Shift-rule derivative of ``f`` in ``params[index]``.

    ``rule="two"`` is ``[f(x + pi/2) - f(x - pi/2)] / 2``, exact for gates
    generated by a Pauli. ``rule="four"`` handles the controlled-rotation
    angle of CU3, whose generator has eigenvalues {0, +-1/2}.
    """
    if rule not in SHIFT_RULES:
        raise ValueError(f"unknown shift rule {rule!r}")
    p = np.array(params, dtype=float)
    total = 0.0
    for coef, shift in SHIFT_RULES[rule]:
        q = p.copy()
        q[index] += shift
        total += coef * f(q)
    return float(total)


def shift_table(rules: Sequence[str]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Target indices, offsets and a (rows, params) coefficient matrix.

    Evaluating ``f`` on ``shifted_rows`` and multiplying by the matrix gives the
    full gradient.
    """
    idx, offs, coefs = [], [], []
    for i, r in enumerate(rules):
        for c, s in SHIFT_RULES[r]:
            idx.append(i)
            offs.append(s)
            coefs.append(c)
    mat = np.zeros((len(idx), len(rules)))
    mat[np.arange(len(idx)), idx] = coefs
    return np.array(idx, dtype=int), np.array(offs), mat


def shifted_rows(params: np.ndarray, table) -> np.ndarray:
    idx, offs, _ = table
    rows = np.repeat(np.asarray(params, dtype=float)[None], len(idx), axis=0)
    rows[np.arange(len(idx)), idx] += offs
    return rows


def combine_shifts(values: np.ndarray, table) -> np.ndarray:
    """Fold shifted evaluations (..., rows) into gradients (..., params)."""
    return values @ table[2]


# --- configuration and results --------------------------------------------


OPTIMIZERS = ("bundle", "gda")


@dataclass(frozen=True)
class GameConfig:
    """Hyperparameters of a training run.

    ``optimizer="bundle"``: each iteration the discriminator runs up to
    ``discriminator_steps`` L-BFGS iterations from its previous angles, then the
    generator takes a damped Gauss-Newton step that moves the loss of the last
    ``bundle_size`` discriminators toward 1/2 (step scaled by ``eta_g``).
    ``optimizer="gda"``: plain alternating gradient descent-ascent with
    learning rates ``eta_d`` and ``eta_g``.
    """

    iterations: int = 400
    generator_steps: int = 1
    discriminator_steps: int = 8
    eta_g: float = 1.0
    eta_d: float = 0.1
    epsilon: float = 0.02
    shots: int = 0
    window: int = 5
    restarts: int = 3
    seed: int = 0
    optimizer: str = "bundle"
    bundle_size: int = 8
    damping: float = 1e-3
    max_step: float = 1.0
    record_fidelity: bool = False

    def __post_init__(self):
        for name in ("iterations", "generator_steps", "discriminator_steps", "window", "restarts", "bundle_size"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        for name in ("eta_g", "eta_d", "epsilon", "max_step"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be a positive real, got {v!r}")
        if not self.epsilon < 0.5:
            raise ValueError("epsilon must be below 0.5")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        if self.shots < 0:
            raise ValueError("shots must be non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")

    @classmethod
    def from_mapping(cls, m: Mapping) -> "GameConfig":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(m) - set(known)
        if unknown:
            raise ValueError(f"unknown game settings: {sorted(unknown)}")
        kw = {}
        for k, v in m.items():
            default = getattr(cls, k)
            if isinstance(default, bool):
                kw[k] = v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                kw[k] = int(v)
            elif isinstance(default, float):
                kw[k] = float(v)
            else:
                kw[k] = str(v)
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Verdict:
    label: str
    final_loss: float
    gap: float
    iterations: int
    seed: int
    restart: int = 0

    @property
    def separable(self) -> bool:
        return self.label == "separable"

    def to_json_obj(self) -> dict:
        return asdict(self)


@dataclass
class GameTrace:
    """Per-iteration record of one run."""

    loss: np.ndarray
    exp_rho: np.ndarray
    exp_sigma: np.ndarray
    avg_loss: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray
    final_state: DensityMatrix
    num_qubits: int
    verdict: Verdict | None = None
    fidelity: np.ndarray | None = None

    @property
    def distance(self) -> np.ndarray:
        return 0.5 * np.abs(self.exp_sigma - self.exp_rho)

    def __len__(self) -> int:
        return len(self.loss)

    def rows(self) -> list[dict]:
        out = []
        for t in range(len(self)):
            row = {
                "t": t + 1,
                "loss": float(self.loss[t]),
                "exp_rho": float(self.exp_rho[t]),
                "exp_sigma": float(self.exp_sigma[t]),
                "distance": float(self.distance[t]),
            }
            if self.fidelity is not None:
                row["fidelity"] = float(self.fidelity[t])
            out.append(row)
        return out

    def to_csv(self, path) -> None:
        rows = self.rows()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})

    def to_json_obj(self) -> dict:
        return {
            "records": self.rows(),
            "theta": self.theta.tolist(),
            "gamma": self.gamma.tolist(),
            "final_state": self.final_state.to_json_obj(),
            "verdict": None if self.verdict is None else self.verdict.to_json_obj(),
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_obj()))


def window_gap(losses, window: int) -> float:
    tail = np.asarray(losses)[-window:]
    return float(np.max(np.abs(tail - 0.5)))


def make_verdict(losses, cfg: GameConfig, restart: int = 0) -> Verdict:
    wg = window_gap(losses, cfg.window)
    final = float(losses[-1])
    return Verdict(
        label="separable" if wg <= cfg.epsilon else "entangled",
        final_loss=final,
        gap=abs(final - 0.5),
        iterations=len(losses),
        seed=cfg.seed,
        restart=restart,
    )


# --- training --------------------------------------------------------------


class _Game:
    """State shared by the update rules of one run."""

    def __init__(self, rho: np.ndarray, gen: GeneratorSpec, d: Discriminator, cfg: GameConfig, rng):
        self.rho, self.gen, self.d, self.cfg, self.rng = rho, gen, d, cfg, rng
        self.gtab = shift_table(gen.shift_rules())
        self.dtab = shift_table(d.circuit.shift_rules())

    def prob(self, p: np.ndarray) -> np.ndarray:
        if self.cfg.shots == 0:
            return p
        return np.array([_sample(float(x), self.cfg.shots, self.rng) for x in np.ravel(p)]).reshape(np.shape(p))

    def disc_objective(self, gammas: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        """Tr(M rho) - Tr(M sigma) = 2L - 1 for each row."""
        v = self.d.isometry_batch(gammas)
        pr = np.einsum("bik,ij,bjk->b", v.conj(), self.rho, v).real
        ps = np.einsum("bik,ij,bjk->b", v.conj(), sigma, v).real
        return self.prob(pr) - self.prob(ps)

    def disc_value_grad(self, gamma: np.ndarray, sigma: np.ndarray):
        rows = np.vstack([gamma[None], shifted_rows(gamma, self.dtab)])
        vals = self.disc_objective(rows, sigma)
        g = combine_shifts(vals[1:], self.dtab)
        return float(vals[0]), g

    def update_discriminator(self, gamma: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        k = self.cfg.discriminator_steps
        if self.cfg.optimizer == "gda":
            for _ in range(k):
                _, g = self.disc_value_grad(gamma, sigma)
                _check_finite(g, "discriminator")
                gamma = gamma - self.cfg.eta_d * 0.5 * g
            return gamma
        res = minimize(
            self.disc_value_grad, gamma, args=(sigma,), jac=True, method="L-BFGS-B", options={"maxiter": k}
        )
        _check_finite(res.x, "discriminator")
        return res.x if res.fun <= self.disc_value_grad(gamma, sigma)[0] else gamma

    def sigma_jacobian(self, theta: np.ndarray, ms: np.ndarray):
        """Tr(M_j sigma) and its gradient in theta for each stored POVM."""
        rows = np.vstack([theta[None], shifted_rows(theta, self.gtab)])
        states = self.gen.states_batch(rows)
        vals = self.prob(np.einsum("mij,bji->mb", ms, states).real)
        jac = combine_shifts(vals[:, 1:], self.gtab)
        return vals[:, 0], jac

    def update_generator(self, theta: np.ndarray, bundle: list) -> np.ndarray:
        ms = np.array(bundle)
        cfg = self.cfg
        if cfg.optimizer == "gda":
            _, jac = self.sigma_jacobian(theta, ms[-1:])
            g = -0.5 * jac[0]
            _check_finite(g, "generator")
            return theta + cfg.eta_g * g
        ps, jac = self.sigma_jacobian(theta, ms)
        pr = self.prob(np.einsum("mij,ji->m", ms, self.rho).real)
        resid = ps - pr
        _check_finite(jac, "generator")
        a = jac @ jac.T + cfg.damping * np.eye(len(ms))
        step = -cfg.eta_g * (jac.T @ np.linalg.solve(a, resid))
        norm = np.linalg.norm(step)
        if norm > cfg.max_step:
            step *= cfg.max_step / norm
        return theta + step


def _check_finite(x, who: str) -> None:
    if not np.all(np.isfinite(x)):
        raise GameError(f"non-finite {who} update; lower the learning rate")


def _validate_inputs(rho, gen: GeneratorSpec, d: Discriminator) -> np.ndarray:
    report = validate_separability(gen)
    if not report:
        raise SeparabilityError(str(report))
    m = as_matrix(rho)
    if m.shape != (2**gen.num_system,) * 2:
        raise DimensionError(f"state is {m.shape}, generator makes {gen.num_system}-qubit states")
    if d.num_qubits != gen.num_system:
        raise DimensionError(f"discriminator acts on {d.num_qubits} qubits, state has {gen.num_system}")
    return m


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(restart)])


def train(
    rho,
    gen: GeneratorSpec,
    d: Discriminator,
    cfg: GameConfig,
    restart: int = 0,
    theta0=None,
    gamma0=None,
) -> tuple[Verdict, GameTrace]:
    """One training run from random (or given) initial angles."""
    rho_m = _validate_inputs(rho, gen, d)
    rho_dm = rho if isinstance(rho, DensityMatrix) else DensityMatrix.from_array(rho_m)
    rng = restart_rng(cfg.seed, restart)
    theta = rng.uniform(0, 2 * np.pi, gen.num_params) if theta0 is None else np.array(theta0, dtype=float)
    gamma = rng.uniform(0, 2 * np.pi, d.num_params) if gamma0 is None else np.array(gamma0, dtype=float)
    if theta.shape != (gen.num_params,) or gamma.shape != (d.num_params,):
        raise ValueError("initial parameter vectors have the wrong length")
    game = _Game(rho_m, gen, d, cfg, rng)

    T = cfg.iterations
    losses, pr_hist, ps_hist, avg_hist = (np.empty(T) for _ in range(4))
    thetas, gammas = np.empty((T, len(theta))), np.empty((T, len(gamma)))
    fids = np.empty(T) if cfg.record_fidelity else None
    sigma_sum = np.zeros_like(rho_m)
    bundle: list = []
    for t in range(T):
        sigma = gen.states_batch(theta)[0]
        gamma = game.update_discriminator(gamma, sigma)
        m = d.povm(gamma)
        pr = game.prob(np.real(np.trace(m @ rho_m)))
        ps = game.prob(np.real(np.trace(m @ sigma)))
        losses[t] = 0.5 * pr + 0.5 * (1.0 - ps)
        if not np.isfinite(losses[t]):
            raise GameError("loss became non-finite")
        pr_hist[t], ps_hist[t] = pr, ps
        sigma_sum += sigma
        avg_hist[t] = 0.5 + 0.5 * np.real(np.trace(m @ (rho_m - sigma_sum / (t + 1))))
        thetas[t], gammas[t] = theta, gamma
        if fids is not None:
            fids[t] = fidelity(rho_dm, DensityMatrix.from_array(sigma))
        bundle.append(m)
        del bundle[: -cfg.bundle_size]
        for _ in range(cfg.generator_steps):
            theta = game.update_generator(theta, bundle)

    verdict = make_verdict(losses, cfg, restart)
    trace = GameTrace(
        loss=losses,
        exp_rho=pr_hist,
        exp_sigma=ps_hist,
        avg_loss=avg_hist,
        theta=thetas,
        gamma=gammas,
        final_state=DensityMatrix.from_array(gen.states_batch(thetas[-1])[0]),
        num_qubits=gen.num_system,
        verdict=verdict,
        fidelity=fids,
    )
    return verdict, trace


@dataclass
class Detection:
    """Outcome of ``detect``: the overall verdict and every run that was made."""

    verdict: Verdict
    runs: list = field(default_factory=list)

    @property
    def best(self) -> tuple[Verdict, GameTrace]:
        for v, tr in self.runs:
            if v is self.verdict:
                return v, tr
        raise LookupError("no run matches the verdict")


def detect(rho, gen: GeneratorSpec, d: Discriminator, cfg: GameConfig, stop_early: bool = True) -> Detection:
    """Train up to ``cfg.restarts`` times; separable as soon as one run converges.

    Without a converging run the verdict is entangled and reports the run whose
    trailing window came closest to 1/2.
    """
    runs = []
    for r in range(cfg.restarts):
        v, tr = train(rho, gen, d, cfg, restart=r)
        runs.append((v, tr))
        if v.separable and stop_early:
            break
    sep = [v for v, _ in runs if v.separable]
    if sep:
        chosen = sep[0]
    else:
        chosen = min((v for v, _ in runs), key=lambda v: (window_gap(_trace_of(runs, v).loss, cfg.window), v.restart))
    return Detection(chosen, runs)


def _trace_of(runs, v):
    return next(tr for vv, tr in runs if vv is v)


@dataclass(frozen=True)
class BoundReport:
    num_qubits: int
    iterations: int
    bound: float
    avg_loss: float
    satisfied: bool
    applicable: bool
    violations: int
    heuristic: bool = True

    def to_json_obj(self) -> dict:
        return asdict(self)


def convergence_bound_monitor(trace: GameTrace, n_qubits: int | None = None) -> BoundReport:
    """Check |L(sigma_bar, rho) - 1/2| <= 3 sqrt(N/t) along a trace.

    ``sigma_bar`` is the running mean of the generated states, measured with the
    discriminator of the same iteration. The bound is only claimed for separable
    inputs, so ``applicable`` is false for entangled verdicts; the check is
    heuristic for this optimizer either way.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    n = trace.num_qubits if n_qubits is None else int(n_qubits)
    t = np.arange(1, len(trace) + 1)
    bounds = 3 * np.sqrt(n / t)
    ok = np.abs(trace.avg_loss - 0.5) <= bounds
    applicable = trace.verdict is None or trace.verdict.separable
    return BoundReport(
        num_qubits=n,
        iterations=len(trace),
        bound=float(bounds[-1]),
        avg_loss=float(trace.avg_loss[-1]),
        satisfied=bool(ok[-1]),
        applicable=applicable,
        violations=int(np.sum(~ok)),
    )


__all__ = [
    "BoundReport",
    "Detection",
    "Discriminator",
    "GameConfig",
    "GameError",
    "GameTrace",
    "Verdict",
    "combine_shifts",
    "convergence_bound_monitor",
    "detect",
    "expectation",
    "grad_parameter_shift",
    "loss",
    "make_verdict",
    "measured_distance",
    "povm_element",
    "shift_table",
    "shifted_rows",
    "train",
    "window_gap",
]
