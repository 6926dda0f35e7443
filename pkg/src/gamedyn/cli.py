"""Command-line entry point.

Every subcommand builds a :class:`RunConfig` and hands it to :func:`run`, so
``gamedyn run --config FILE`` and the flag form behave identically. Exit
status is 0 on success, 1 when ``verify`` finds a failing check, 2 for bad
input and 3 for numerical failures; the last two write ``error.json``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checks
from . import contraction as ctr
from . import cournot as cn
from .dynamics import (UpdateRule, detect_cycle, iterate, step_simultaneous_best,
                       verify_theorem2)
from .errors import (ConfigurationError, ConvergenceError, DomainError, ParseError,
                     ResolutionError, RootFindError, ShapeError)
from .games import FiniteGame
from .invariants import build_invariant_set, lemma6_check, theorem4_verify
from .io import RunConfig, emit_plot_data, envelope, load_config, load_game, load_potential, write_json

INPUT_ERRORS = (ParseError, ConfigurationError, DomainError, ShapeError)
NUMERIC_ERRORS = (ConvergenceError, RootFindError, ResolutionError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(message)


def _floats(text: str, what: str) -> list:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as err:
        raise ParseError(f"{what} must be comma-separated numbers, got {text!r}") from err


def _rule(cfg: RunConfig) -> UpdateRule:
    return UpdateRule(**cfg.rule)


def _iterate_kw(cfg: RunConfig) -> dict:
    tol = cfg.tolerances
    kw = {}
    if "fixed_point_tol" in tol:
        kw["fixed_point_tol"] = float(tol["fixed_point_tol"])
    if "patience" in tol:
        kw["patience"] = int(tol["patience"])
    return kw


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg: RunConfig) -> int:
    game = load_game(cfg.game_path)
    phi = load_potential(cfg.phi_path, game) if cfg.phi_path else None
    x0 = np.asarray(cfg.x0, dtype=float)
    game.indices(x0)
    traj = iterate(_rule(cfg), game, x0, cfg.steps, potential=phi, seed=cfg.seed,
                   **_iterate_kw(cfg))
    cyc = detect_cycle(traj)
    payload = {"stop_reason": traj.stop_reason, "steps": traj.steps,
               "final": traj.final.tolist(), "cycle": cyc.to_dict()}
    if phi is not None:
        payload["theorem2"] = verify_theorem2(game, phi, traj).to_dict()
    out = _out(cfg)
    traj.to_csv(out / "trajectory.csv")
    write_json(out / "report.json", envelope(cfg.to_dict(), payload))
    print(f"{traj.stop_reason} after {traj.steps} steps; final {traj.final.tolist()}")
    return 0


def _nearest(game: FiniteGame, x) -> tuple:
    return tuple(int(np.argmin(np.abs(a - v))) for a, v in zip(game.action_sets, x))


def _domain(game: FiniteGame, spec: str) -> np.ndarray:
    if spec == "actions":
        return game.profile_points
    pts = [_floats(p, "domain point") for p in spec.split(";") if p.strip()]
    if len(pts) < 2 or any(len(p) != game.n_players for p in pts):
        raise ParseError("domain needs 'actions' or at least two ';'-separated profiles")
    return np.array(pts)


def cmd_analyze_contraction(cfg: RunConfig) -> int:
    game = load_game(cfg.game_path)
    # simultaneous best response, extended off the grid by nearest-profile rounding
    def Z(x):
        return step_simultaneous_best(game, game.values(_nearest(game, x)))
    samples = _domain(game, cfg.domain)
    cert = ctr.certify(Z, samples, cfg.delta1, cfg.margin,
                       domain={"spec": cfg.domain, "points": len(samples)})
    write_json(_out(cfg) / "certificate.json", envelope(cfg.to_dict(), cert.to_dict()))
    print(f"L_C={cert.L_C:.6g} alpha={cert.alpha:.6g} delta2={cert.delta2:.6g} "
          f"r_K={cert.radii.r_K:.6g}")
    return 0


def cmd_invariant_sets(cfg: RunConfig) -> int:
    game = load_game(cfg.game_path)
    phi = load_potential(cfg.phi_path, game)
    x0 = np.asarray(cfg.x0, dtype=float)
    game.indices(x0)
    traj = iterate(_rule(cfg), game, x0, cfg.steps, potential=phi, seed=cfg.seed,
                   **_iterate_kw(cfg))
    spec = build_invariant_set(game, phi, traj, cfg.t0, cfg.eps, grid=cfg.grid)
    payload = {"set": spec.to_dict(), "theorem4": theorem4_verify(traj, spec),
               "lemma6": lemma6_check(traj, game, phi, spec.delta, cfg.eps),
               "stop_reason": traj.stop_reason, "steps": traj.steps}
    out = _out(cfg)
    traj.to_csv(out / "trajectory.csv")
    write_json(out / "invariant_set.json", envelope(cfg.to_dict(), payload))
    print(f"R4={spec.R4:.6g} R5={spec.R5:.6g} threshold={spec.phi_threshold:.6g} "
          f"entry={payload['theorem4']['entry_index']}")
    return 0


def _cournot_settings(c: dict):
    params = cn.CournotParams(**{k: float(c[k]) for k in ("d", "c1", "c2", "a_bar") if k in c})
    mu = c.get("mu", "auto_ne")
    if isinstance(mu, str):
        if mu not in ("auto", "auto_ne"):
            raise ParseError(f"mu must be 'auto' or a point, got {mu!r}")
        mu = None
    elif len(mu) != 2:
        raise ParseError("mu needs two coordinates")
    starts = c.get("starts", "default_grid")
    if isinstance(starts, str):
        if starts != "default_grid":
            raise ParseError(f"starts must be 'default_grid' or a list, got {starts!r}")
        starts = None
    mode = c.get("mode", "both")
    modes = ("repeated", "sequential") if mode == "both" else (mode,)
    if any(m not in cn.MODES for m in modes):
        raise ParseError(f"unknown mode {mode!r}")
    return params, mu, starts, modes, int(c.get("max_steps", 300)), int(c.get("grid_resolution", 400))


def cmd_cournot(cfg: RunConfig) -> int:
    params, mu, starts, modes, steps, res = _cournot_settings(cfg.cournot)
    rep = cn.run_experiment(params, mu, starts, modes, steps, delta1_grid=res)
    out = _out(cfg)
    tdir = out / "trajectories"
    tdir.mkdir(exist_ok=True)
    for key in sorted(rep.trajectories):
        rep.trajectories[key].to_csv(tdir / f"{key}.csv")
    perturbed = {k: v for k, v in rep.trajectories.items() if "perturbed" in k}
    emit_plot_data(perturbed, (rep.x_tilde, rep.radius), out_dir=out / "plot")
    write_json(out / "summary.json", envelope(cfg.to_dict(), rep.summary()))
    worst = max(v["max_tail_distance"] for v in rep.traps.values())
    print(f"x_tilde={rep.x_tilde.tolist()} delta1={rep.delta1:.6g} radius={rep.radius:.6g} "
          f"max tail distance={worst:.6g}")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    try:
        results = checks.run_suite(cfg.suite)
    except KeyError:
        raise ParseError(f"unknown suite {cfg.suite!r}; choose all or one of "
                         + ", ".join(checks.SUITE)) from None
    passed = sum(r.passed for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}")
    print(f"{passed} passed, {len(results) - passed} failed")
    write_json(_out(cfg) / "verify.json",
               envelope(cfg.to_dict(), {"passed": passed, "failed": len(results) - passed,
                                        "checks": [r.to_dict() for r in results]}))
    return 0 if passed == len(results) else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze-contraction": cmd_analyze_contraction,
    "invariant-sets": cmd_invariant_sets,
    "cournot": cmd_cournot,
    "verify": cmd_verify,
}


def run(cfg: RunConfig) -> int:
    return COMMANDS[cfg.command](cfg)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gamedyn", description="Response dynamics in near-potential games.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--out", default="out", help="output directory")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("simulate", help="run update dynamics on a finite game")
    s.add_argument("--game", required=True)
    s.add_argument("--phi", help="potential file; enables the near-potential check")
    s.add_argument("--rule", default="simultaneous_best",
                   choices=["sequential_best", "sequential_better", "simultaneous_best"])
    s.add_argument("--schedule", default="round_robin_eligible",
                   choices=["round_robin_eligible", "seeded_random_eligible"])
    s.add_argument("--selector", default="max_improving",
                   choices=["first_improving", "max_improving"])
    s.add_argument("--x0", required=True, help="comma-separated action values")
    s.add_argument("--steps", type=int, default=100)
    common(s)

    a = sub.add_parser("analyze-contraction", help="fit a contraction to the best-response map")
    a.add_argument("--game", required=True)
    a.add_argument("--domain", default="actions",
                   help="'actions' or ';'-separated profiles like '0,1;1,0'")
    a.add_argument("--margin", type=float, default=0.1)
    a.add_argument("--delta1", type=float, default=0.0)
    common(a, seed=False)

    i = sub.add_parser("invariant-sets", help="radii and trapping set along a trajectory")
    i.add_argument("--game", required=True)
    i.add_argument("--phi", required=True)
    i.add_argument("--t0", type=int, default=0)
    i.add_argument("--eps", type=float, default=0.0)
    i.add_argument("--grid", type=int, default=200)
    i.add_argument("--x0", required=True)
    i.add_argument("--rule", default="simultaneous_best",
                   choices=["sequential_best", "sequential_better", "simultaneous_best"])
    i.add_argument("--steps", type=int, default=200)
    common(i)

    c = sub.add_parser("cournot", help="duopoly experiment with and without perturbation")
    c.add_argument("--d", type=float, default=400.0)
    c.add_argument("--c1", type=float, default=200.0)
    c.add_argument("--c2", type=float, default=100.0)
    c.add_argument("--mu", default="auto", help="'auto' or 'x,y'")
    c.add_argument("--mode", default="both", choices=["repeated", "sequential", "both"])
    c.add_argument("--steps", type=int, default=300)
    common(c)

    v = sub.add_parser("verify", help="run the property suite")
    v.add_argument("--suite", default="all")
    common(v, seed=False)

    r = sub.add_parser("run", help="run a JSON config document")
    r.add_argument("--config", required=True)
    return p


def config_from_args(ns) -> RunConfig:
    if ns.command == "run":
        return load_config(ns.config)
    kw = {"command": ns.command, "output_dir": ns.out}
    if hasattr(ns, "seed"):
        kw["seed"] = ns.seed
    if ns.command in ("simulate", "invariant-sets"):
        kw.update(game_path=ns.game, phi_path=ns.phi, x0=_floats(ns.x0, "x0"), steps=ns.steps,
                  rule={"kind": ns.rule})
        if ns.command == "simulate":
            kw["rule"].update(schedule=ns.schedule, better_selector=ns.selector)
        else:
            kw.update(t0=ns.t0, eps=ns.eps, grid=ns.grid)
    elif ns.command == "analyze-contraction":
        kw.update(game_path=ns.game, domain=ns.domain, margin=ns.margin, delta1=ns.delta1)
    elif ns.command == "cournot":
        mu = "auto_ne" if ns.mu == "auto" else _floats(ns.mu, "mu")
        kw["cournot"] = {"d": ns.d, "c1": ns.c1, "c2": ns.c2, "mu": mu, "mode": ns.mode,
                         "max_steps": ns.steps}
    elif ns.command == "verify":
        kw["suite"] = ns.suite
    return RunConfig(**kw)


def _fail(code: int, err: Exception, out_dir) -> int:
    doc = {"error": {"type": type(err).__name__, "message": str(err), "exit_code": code}}
    if isinstance(err, ParseError):
        doc["error"].update(path=err.path, line=err.line, detail=err.detail)
    diag = getattr(err, "diagnostics", None)
    if diag:
        doc["error"]["diagnostics"] = diag
    if isinstance(err, ConvergenceError):
        doc["error"]["diagnostics"] = {"residual": err.residual,
                                       "last": None if err.last is None else np.asarray(err.last).tolist()}
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "error.json", doc)
    except OSError:
        pass
    print(f"error: {err}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = sys.argv[1:] if argv is None else list(argv)
    out_dir = "out"
    # known before parsing so that argument errors land in the requested directory
    for j, tok in enumerate(args[:-1]):
        if tok == "--out":
            out_dir = args[j + 1]
    try:
        ns = build_parser().parse_args(args)
        out_dir = getattr(ns, "out", out_dir)
        cfg = config_from_args(ns)
        out_dir = cfg.output_dir
        return run(cfg)
    except INPUT_ERRORS as err:
        return _fail(2, err, out_dir)
    except NUMERIC_ERRORS as err:
        return _fail(3, err, out_dir)


if __name__ == "__main__":
    sys.exit(main())
