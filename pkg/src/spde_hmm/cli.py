"""Command-line entry point ``spde-hmm``.

    spde-hmm <subcommand> --config PATH [--out DIR] [--threads K] [--seed S]

The master seed is taken from ``--seed``, else from ``SPDE_HMM_SEED``, else
from the config file. Exit codes: 0 success, 1 other failure, 2 invalid
configuration, 3 statistics error. Failures print one JSON error record on
stderr and write it to ``<out>/error.json`` when the directory is usable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import RunConfig
from .errors import ConfigError, SpdeHmmError, StatisticsError

SUBCOMMANDS = (
    "simulate",
    "invariant-check",
    "rate-strong",
    "rate-weak",
    "hmm-sweep",
    "poisson-check",
    "mixing-sums",
)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _manifest(cfg: RunConfig, command: str, extra=None) -> dict:
    out = {
        "command": command,
        "master_seed": cfg.seed,
        "backend": kernels.BACKEND,
        "version": __version__,
        "config": cfg.to_text(),
    }
    if extra:
        out.update(extra)
    return out


def _write(out: Path, files: dict):
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- subcommands

def cmd_simulate(cfg: RunConfig, out: Path):
    from .schemes import integrate
    from .spectral import SpectralField, lp_norm

    prob = cfg.problem()
    params = cfg.hmm_params()
    x0, y0 = cfg.initial_states()
    rec = integrate(cfg.scheme, prob, params, x0, y0, seed=cfg.seed, replicas=0)
    rows = []
    for t, c in zip(rec.times, rec.states):
        f = SpectralField(c, prob.basis)
        rows.append((t, lp_norm(f), lp_norm(f, np.inf), float(np.sqrt(np.sum(prob.basis.eigenvalues * c * c)))))
    _write(out, {
        "trajectory.csv": _csv_text(("t", "l2_norm", "sup_norm", "h1_seminorm"), rows),
        "manifest.json": _dump(_manifest(cfg, "simulate", {
            "scheme": cfg.scheme, "replica": 0, "step": rec.step, "streams": [list(s) for s in rec.stream_ids]})),
    })


def cmd_invariant_check(cfg: RunConfig, out: Path):
    from .fast import invariant_law_moments, run_micro_chain, MicroSchemeState, ou_exact_step
    from .forcing import ROLE_FAST, RngStream

    prob = cfg.problem()
    model = prob.fast
    b = prob.basis
    K = cfg.replicas
    modes = min(8, b.n_modes)
    tau = cfg.tau
    reps = np.arange(K)
    rng = RngStream(cfg.seed, reps, ROLE_FAST)
    # burn-in long enough for the slowest mode to forget y = 0
    n_micro = int(np.ceil(40.0 / (tau * model.spectral_gap)))
    chain, _ = run_micro_chain(MicroSchemeState(b.zeros(K), tau), model, rng, n_micro, 0)
    y_exact = ou_exact_step(b.zeros(K), model, 40.0 / model.spectral_gap, rng.with_role(2), 0)
    rows = []
    for kind, sample, target in (
        ("micro_chain", chain.y.coeffs, invariant_law_moments(model, tau)),
        ("exact_ou", y_exact.coeffs, invariant_law_moments(model, 0.0)),
    ):
        for n in range(modes):
            s2 = sample[:, n] ** 2
            emp = float(s2.mean())
            se = float(s2.std(ddof=1) / np.sqrt(K))
            z = (emp - target[n]) / se if se > 0 else 0.0
            rows.append((kind, n + 1, emp, float(target[n]), se, z))
    _write(out, {
        "invariant.csv": _csv_text(("kind", "mode", "empirical", "closed_form", "se", "z"), rows),
        "manifest.json": _dump(_manifest(cfg, "invariant-check", {
            "replicas": [0, K], "micro_steps": n_micro, "roles": ["fast-noise", "aux"]})),
    })
    return max(abs(r[-1]) for r in rows)


def _report_cmd(cfg: RunConfig, out: Path, kind: str):
    from . import harness

    if kind == "rate-strong":
        rep = harness.strong_error_vs_epsilon(cfg.setup(), cfg.eps_list, cfg.replicas)
    elif kind == "rate-weak":
        rep = harness.weak_error_vs_epsilon(cfg.setup(), cfg.eps_list, cfg.functional(),
                                           cfg.replicas, coupled=cfg.coupled)
    else:
        rep = harness.hmm_gap_vs_Ma(cfg.setup(), cfg.Ma_list, cfg.replicas, cfg.M_factor)
    rep.write(out)
    _write(out, {"manifest.json": _dump(_manifest(cfg, kind, {"report_seed_manifest": rep.seed_manifest}))})
    return rep


def cmd_poisson_check(cfg: RunConfig, out: Path):
    from .poisson import PoissonProbe, bound_probe, generator_identity_check
    from .reaction import NonlinearitySpec

    prob = cfg.problem()
    model = prob.fast
    spec = NonlinearitySpec(cfg.poisson_family, cfg.g, cfg.c)
    T_q = cfg.T_q or None
    rows = []
    for lemma in ("Phi_0", "Phi_0ter"):
        for r in bound_probe(lemma, spec, model, cfg.poisson_scales, cfg.poisson_gamma, T_q=T_q):
            rows.append((r["lemma"], r["scale"], r["value"], r["bound"], r["ratio"]))
    b = prob.basis
    rng = np.random.default_rng(cfg.seed)
    probe = PoissonProbe(b.field(rng.standard_normal(b.n_modes) * 0.3),
                         b.field(rng.standard_normal(b.n_modes) * 0.3),
                         b.field(rng.standard_normal(b.n_modes)), T_q)
    res = generator_identity_check(probe, spec, model) if b.n_modes <= 16 else float("nan")
    rows.append(("generator_identity", 0.0, res, 0.0, float("nan")))
    _write(out, {
        "poisson.csv": _csv_text(("lemma", "scale", "value", "bound", "ratio"), rows),
        "manifest.json": _dump(_manifest(cfg, "poisson-check", {
            "probe_rng": "numpy default_rng(master_seed)"})),
    })


def cmd_mixing_sums(cfg: RunConfig, out: Path):
    from .harness import mixing_sums

    c = cfg.mixing_rate_constant()
    r1, r2 = mixing_sums(cfg.M, cfg.Ma, cfg.tau, c)
    _write(out, {
        "mixing.csv": _csv_text(("M", "Ma", "tau", "c", "R1", "R2"), [(cfg.M, cfg.Ma, cfg.tau, c, r1, r2)]),
        "manifest.json": _dump(_manifest(cfg, "mixing-sums")),
    })


# ---------------------------------------------------------------- dispatch

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spde-hmm", description="Slow-fast SPDE averaging experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="path to a key = value config file")
        sp.add_argument("--out", help="output directory (default: output.dir from the config)")
        sp.add_argument("--threads", type=int, help="cap on worker threads")
        sp.add_argument("--seed", type=int, help="master seed (overrides SPDE_HMM_SEED)")
    return p


def _resolve(config, out, threads, seed) -> RunConfig:
    cfg = RunConfig.load(config)
    over = {}
    env = os.environ.get("SPDE_HMM_SEED")
    if env is not None:
        try:
            over["seed"] = int(env, 0)
        except ValueError:
            raise ConfigError("SPDE_HMM_SEED is not an integer", {"SPDE_HMM_SEED": env})
    if seed is not None:
        over["seed"] = seed
    if threads is not None:
        over["threads"] = threads
    if out is not None:
        over["out_dir"] = str(out)
    return cfg.with_overrides(**over) if over else cfg


def run(command: str, config, out=None, threads=None, seed=None) -> int:
    """Run one subcommand on a config file; returns the process exit status."""
    if command not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {command!r}")
    out = Path(out) if out else None
    try:
        cfg = _resolve(config, out, threads, seed)
        out = Path(cfg.out_dir)
        if command == "simulate":
            cmd_simulate(cfg, out)
        elif command == "invariant-check":
            cmd_invariant_check(cfg, out)
        elif command in ("rate-strong", "rate-weak", "hmm-sweep"):
            rep = _report_cmd(cfg, out, command)
            print(f"{command}: slope {rep.slope:.4f} +/- {rep.slope_se:.4f}")
        elif command == "poisson-check":
            cmd_poisson_check(cfg, out)
        elif command == "mixing-sums":
            cmd_mixing_sums(cfg, out)
        return 0
    except ConfigError as exc:
        return _fail(out, 2, "config", exc, exc.fields)
    except StatisticsError as exc:
        return _fail(out, 3, "statistics", exc)
    except (SpdeHmmError, ValueError, OSError) as exc:
        return _fail(out, 1, type(exc).__name__, exc)


def _fail(out, code, kind, exc, fields=None) -> int:
    rec = {"error": kind, "exit_code": code, "message": str(exc), "fields": fields or {}}
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            _write(out, {"error.json": text + "\n"})
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
