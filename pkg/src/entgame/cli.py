"""Command-line front end.

Every command reads an optional YAML config (``--config``), applies ``--set
key.path=value`` overrides and the ``--seed/--shots/--out`` shortcuts, runs,
and writes plain CSV/JSON artifacts into the output directory.

Exit codes: 0 separable (or success), 1 entangled, 2 error.
"""

from __future__ import annotations

import copy
import csv
import json
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from .channels import build_rho_e, build_rho_s, build_state
from .circuits import READOUT, CircuitError, GeneratorSpec, preset_ansatz, validate_separability
from .game import Discriminator, GameConfig, GameError, detect
from .linalg import Bipartition, DensityMatrix, DimensionError, StateError, fidelity
from .oracles import confusion_matrix, ppt_is_exact, ppt_verdict, witness_value

EXIT_SEPARABLE, EXIT_ENTANGLED, EXIT_ERROR = 0, 1, 2

DEFAULTS = {
    "state": {"kind": "rho_e", "p": 0.8},
    "generator": {"preset": "convex_generator_2q"},
    "discriminator": {"preset": "deep_discriminator_2q"},
    "bipartition": None,
    "game": {},
    "seed": 0,
    "out": "results",
    "mixed": {"p": 0.8},
    "sweep": {"start": 0.0, "stop": 1.0, "num": 11},
    "confusion": {"samples": 500, "ensemble": "ginibre", "workers": 1},
}


class ConfigError(ValueError):
    pass


# --- configuration ---------------------------------------------------------


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key}: {p} is not a section")
    node[parts[-1]] = yaml.safe_load(raw)


def load_config(path, overrides=(), seed=None, shots=None, out=None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        cfg = _merge(cfg, loaded)
    for a in overrides:
        apply_override(cfg, a)
    if seed is not None:
        cfg["seed"] = seed
    if shots is not None:
        cfg.setdefault("game", {})["shots"] = shots
    if out is not None:
        cfg["out"] = out
    return cfg


def game_config(cfg: dict) -> GameConfig:
    g = dict(cfg.get("game") or {})
    g.setdefault("seed", int(cfg.get("seed", 0)))
    return GameConfig.from_mapping(g)


def _preset_args(section) -> tuple[str, dict]:
    if isinstance(section, str):
        return section, {}
    if not isinstance(section, dict) or "preset" not in section:
        raise ConfigError(f"expected a preset name or {{preset: ...}}, got {section!r}")
    kw = {k: v for k, v in section.items() if k not in ("preset", "readout")}
    return section["preset"], kw


def build_generator(section) -> GeneratorSpec:
    name, kw = _preset_args(section)
    spec = preset_ansatz(name, **kw)
    if not isinstance(spec, GeneratorSpec):
        raise ConfigError(f"preset {name!r} is not a generator")
    return spec


def build_discriminator(section) -> Discriminator:
    name, kw = _preset_args(section)
    circ = preset_ansatz(name, **kw)
    if isinstance(circ, GeneratorSpec):
        raise ConfigError(f"preset {name!r} is a generator, not a discriminator")
    readout = section.get("readout") if isinstance(section, dict) else None
    return Discriminator(circ, READOUT.get(name) if readout is None else int(readout))


def load_state(section) -> DensityMatrix:
    if isinstance(section, dict) and "file" in section:
        try:
            return DensityMatrix.load(section["file"])
        except (OSError, json.JSONDecodeError) as exc:
            raise StateError(f"cannot read state file {section['file']}: {exc}") from exc
    if not isinstance(section, dict) or "kind" not in section:
        raise ConfigError("state needs either 'kind' or 'file'")
    kw = {k: v for k, v in section.items() if k != "kind"}
    return build_state(section["kind"], **kw)


def _bipartition(cfg: dict, gen: GeneratorSpec) -> Bipartition:
    bp = cfg.get("bipartition")
    if bp is None:
        return gen.bipartition
    cut = Bipartition(tuple(bp[0]), tuple(bp[1]))
    if cut != gen.bipartition:
        raise ConfigError(f"bipartition {bp} differs from the generator's cut")
    return cut


# --- artifact writers -----------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_detection(rho, gen, d, gcfg, label: str | None = None):
    det = detect(rho, gen, d, gcfg)
    v = det.verdict
    return v, next(tr for vv, tr in det.runs if vv is v), det


# --- commands --------------------------------------------------------------


def cmd_detect(cfg: dict) -> int:
    rho = load_state(cfg["state"])
    gen = build_generator(cfg["generator"])
    d = build_discriminator(cfg["discriminator"])
    cut = _bipartition(cfg, gen)
    gcfg = game_config(cfg)
    v, tr, _ = _run_detection(rho, gen, d, gcfg)
    out = _outdir(cfg)
    obj = v.to_json_obj()
    line = f"verdict: {v.label} (final loss {v.final_loss:.6f}, gap {v.gap:.6f}, restart {v.restart})"
    if rho.num_qubits == cut.num_qubits:
        lam, ppt = ppt_verdict(rho, cut)
        exact = ppt_is_exact(cut)
        truth = ("separable" if ppt == "ppt" else "entangled") if exact else ppt
        obj["cross_check"] = {"ppt_min_eigenvalue": lam, "ppt": truth, "exact": exact, "agrees": truth == v.label}
        line += f"\nppt cross-check: min PT eigenvalue {lam:.6f} -> {truth} ({'agrees' if truth == v.label else 'disagrees'})"
    _write_json(out / "verdict.json", obj)
    tr.to_csv(out / "trace.csv")
    click.echo(line)
    return EXIT_SEPARABLE if v.separable else EXIT_ENTANGLED


def _reproduce(cfg: dict, cases) -> int:
    out = _outdir(cfg)
    gcfg = GameConfig.from_mapping({**game_config(cfg).to_dict(), "record_fidelity": True})
    verdicts, plot_rows = {}, []
    for name, rho, gen, d in cases:
        v, tr, _ = _run_detection(rho, gen, d, gcfg)
        tr.to_csv(out / f"trace_{name}.csv")
        for r in tr.rows():
            plot_rows.append([name, r["t"], r["loss"], r["exp_rho"], r["exp_sigma"], r["distance"], r["fidelity"]])
        final_f = fidelity(rho, tr.final_state)
        verdicts[name] = {
            **v.to_json_obj(),
            "final_fidelity": final_f,
            "final_distance": float(tr.distance[-1]),
        }
        click.echo(
            f"{name}: {v.label}, L_T = {v.final_loss:.4f}, D_T = {tr.distance[-1]:.4f}, F_T = {final_f:.4f}"
        )
    _write_csv(
        out / "plot_data.csv",
        ["state", "t", "loss", "exp_rho", "exp_sigma", "distance", "fidelity"],
        plot_rows,
    )
    _write_json(out / "verdicts.json", verdicts)
    return 0


def cmd_reproduce_pure(cfg: dict) -> int:
    gen = preset_ansatz("pure_generator_5q")
    d = Discriminator(preset_ansatz("pure_discriminator_5q"), READOUT["pure_discriminator_5q"])
    cases = [(n, build_state(n), gen, d) for n in ("rho_g23", "rho_g5")]
    return _reproduce(cfg, cases)


def cmd_reproduce_mixed(cfg: dict) -> int:
    p = float(cfg["mixed"]["p"])
    gen = preset_ansatz("mixed_generator_2q", p=p)
    d = Discriminator(preset_ansatz("mixed_discriminator_2q"), READOUT["mixed_discriminator_2q"])
    cases = [("rho_s", build_rho_s(p), gen, d), ("rho_e", build_rho_e(p), gen, d)]
    return _reproduce(cfg, cases)


def sweep_grid(section: dict) -> np.ndarray:
    if "grid" in section:
        grid = np.array([float(x) for x in section["grid"]])
    else:
        grid = np.linspace(float(section["start"]), float(section["stop"]), int(section["num"]))
    if np.any(grid < 0) or np.any(grid > 1):
        raise ConfigError("sweep grid must lie in [0, 1]")
    return grid


def witness_table(grid) -> list[list[float]]:
    cut = Bipartition((0,), (1,))
    rows = []
    for p in grid:
        p = float(p)
        rho_e = build_rho_e(p)
        rows.append([p, witness_value(build_rho_s(p)), witness_value(rho_e), ppt_verdict(rho_e, cut)[0]])
    return rows


def cmd_witness_sweep(cfg: dict) -> int:
    rows = witness_table(sweep_grid(cfg["sweep"]))
    out = _outdir(cfg)
    _write_csv(out / "sweep.csv", ["p", "witness_rho_s", "witness_rho_e", "ppt_min_eig_rho_e"], rows)
    for r in rows:
        click.echo("p=%.3f  W(rho_s)=%.4f  W(rho_e)=%.4f  ppt_min(rho_e)=%.4f" % tuple(r))
    return 0


def cmd_confusion(cfg: dict) -> int:
    c = cfg["confusion"]
    gen_name, gen_kw = _preset_args(cfg["generator"])
    disc_name, disc_kw = _preset_args(cfg["discriminator"])
    if gen_kw or disc_kw:
        raise ConfigError("the confusion benchmark takes bare preset names")
    res = confusion_matrix(
        int(c["samples"]),
        int(cfg["seed"]),
        game_config(cfg),
        generator=gen_name,
        discriminator=disc_name,
        ensemble=str(c.get("ensemble", "ginibre")),
        workers=int(c.get("workers", 1)),
    )
    res.write(_outdir(cfg))
    click.echo(
        f"TP={res.tp} FP={res.fp} TN={res.tn} FN={res.fn}  accuracy={res.accuracy:.4f}  "
        f"boundary-excluded accuracy={res.guarded_accuracy():.4f}"
    )
    return 0


COMMANDS = {
    "detect": cmd_detect,
    "reproduce-pure": cmd_reproduce_pure,
    "reproduce-mixed": cmd_reproduce_mixed,
    "witness-sweep": cmd_witness_sweep,
    "confusion": cmd_confusion,
}

_HANDLED = (ConfigError, StateError, DimensionError, CircuitError, GameError, KeyError, ValueError, TypeError, OSError)


def run_command(name: str, config=None, sets=(), seed=None, shots=None, out=None) -> int:
    """Run one command; returns the exit code instead of exiting."""
    try:
        cfg = load_config(config, sets, seed, shots, out)
        return COMMANDS[name](cfg)
    except _HANDLED as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_ERROR


def _common(f):
    f = click.option("--set", "sets", multiple=True, metavar="K=V", help="Override a config entry (dotted key).")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(f)
    f = click.option("--shots", type=click.IntRange(min=0), default=None, help="Shots per expectation (0 = exact).")(f)
    f = click.option("--seed", type=int, default=None, help="Master RNG seed.")(f)
    f = click.option("--config", type=click.Path(dir_okay=False), default=None, help="YAML config file.")(f)
    return f


@click.group()
def main():
    """Adversarial bipartite entanglement detection."""


def _register(name: str, doc: str):
    @main.command(name=name, help=doc)
    @_common
    def _cmd(config, seed, shots, out, sets):
        sys.exit(run_command(name, config, sets, seed, shots, out))

    return _cmd


_register("detect", "Label one state separable (exit 0) or entangled (exit 1).")
_register("reproduce-pure", "Run the five-qubit GHZ pair with the pure-state presets.")
_register("reproduce-mixed", "Run rho_S and rho_E with the mixed-state presets.")
_register("witness-sweep", "Tabulate the GHZ witness and PPT over the noise parameter.")
_register("confusion", "Benchmark game verdicts against PPT on random two-qubit states.")


if __name__ == "__main__":
    main()
