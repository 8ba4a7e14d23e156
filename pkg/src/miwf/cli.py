"""Command line entry point: ``miwf <command> [--config FILE] [--set key=value ...] [--out DIR]``.

Exit codes: 0 on success, 2 on configuration/validation errors, 3 on a
numerical halt (degenerate metric, umbilic point, non-finite values).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from . import hopf
from .errors import MIWFError, NumericalHalt, ParseError, ValidationError
from .flow import FlowConfig, run_flow, symbol_bounds
from .geometry import geometry_of, willmore_energy
from .io import DiagnosticsWriter, export_snapshot, read_csv, write_table
from .surfaces import build_clifford_stereo, build_clifford_torus, build_torus_of_revolution

EXIT_OK, EXIT_INVALID, EXIT_HALT = 0, 2, 3


def surface_from_config(cfg):
    kind = cfg["surface.kind"]
    nu, nv = cfg["grid.nu"], cfg["grid.nv"]
    if kind == "torus_of_revolution":
        return build_torus_of_revolution(cfg["surface.R"], cfg["surface.r"], nu, nv)
    if kind == "clifford":
        return build_clifford_torus(nu, nv)
    if kind == "clifford_stereo":
        return build_clifford_stereo(nu, nv)
    try:
        return read_csv(cfg["surface.path"])
    except (OSError, ValueError) as exc:
        raise ValidationError("surface.path", str(exc)) from None


def curve_from_config(cfg):
    name, args = cfgmod.parse_curve(cfg["hopf.curve"])
    n = cfg["hopf.n"]
    if name == "great_circle":
        return hopf.great_circle(n)
    if name == "latitude":
        return hopf.latitude(args[0], n)
    return hopf.wavy(args[0], args[1], n)


def _prepare(cfg, out):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.echo())


def cmd_simulate(cfg, out):
    _prepare(cfg, out)
    f0 = surface_from_config(cfg)
    fc = FlowConfig(flow_kind=cfg["flow.kind"], t_end=cfg["flow.t_end"], safety=cfg["flow.safety"],
                    min_a0sq_floor=cfg["flow.min_a0sq"], snapshot_every=cfg["output.snapshot_every"],
                    max_steps=cfg["flow.max_steps"] or None, path=cfg["flow.path"])
    every = cfg["output.snapshot_every"]
    with DiagnosticsWriter(os.path.join(out, "diagnostics.csv")) as diag:
        def on_state(s):
            diag.row(*s.row())
            if every and s.step % every == 0:
                export_snapshot(s.f, out, s.step)

        traj = run_flow(f0, fc, on_state=on_state)
        if traj.halt is not None:
            diag.halt(traj.halt.reason, str(traj.halt))
    if traj.states:
        export_snapshot(traj.final.f, out, traj.final.step)
        s = traj.final
        print(f"steps = {s.step}\nt = {s.t!r}\nwillmore_energy = {s.energy!r}\nmin_a0sq = {s.min_a0sq!r}")
    if traj.halt is not None:
        print(f"halt: {traj.halt.reason}: {traj.halt}", file=sys.stderr)
        return EXIT_HALT
    return EXIT_OK


def cmd_energy(cfg, out):
    f = surface_from_config(cfg)
    c = geometry_of(f)
    lo, hi = symbol_bounds(c)
    print(f"willmore_energy = {willmore_energy(c)!r}")
    radius = np.linalg.norm(f.points, axis=-1)
    if np.max(np.abs(radius - 1.0)) <= 1e-8:
        print(f"willmore_energy_sphere = {willmore_energy(c, 'sphere')!r}")
    print(f"min_a0sq = {float(np.min(c.a0sq))!r}")
    print(f"symbol_min = {lo!r}\nsymbol_max = {hi!r}")
    return EXIT_OK


def cmd_linearize(cfg, out):
    from .linearization import (
        adjoint_flow,
        fd_check,
        linear_flow,
        pairing,
        random_smooth_field,
        record_flow,
        richardson_study,
        symbol_probe,
    )

    _prepare(cfg, out)
    f = surface_from_config(cfg)
    rng = np.random.default_rng(cfg["linearize.seed"])
    h = cfg["linearize.h"]
    delta = cfg["flow.min_a0sq"]
    rows = []
    eta = random_smooth_field(f.points.shape, rng)
    rows.append(("fd_relative_error", h, fd_check(f, None, eta, h, delta)))
    rows.append(("fd_relative_error", 10 * h, fd_check(f, None, eta, 10 * h, delta)))
    rows.append(("symbol_probe_deviation", float(f.nu // 4), symbol_probe(f, None, delta)))
    steps = cfg["linearize.steps"]
    log, _ = record_flow(f, steps, safety=cfg["flow.safety"], delta=delta)
    xi = random_smooth_field(f.points.shape, rng)
    mid = steps // 2
    direct = linear_flow(log, 0, steps, xi)
    composed = linear_flow(log, mid, steps, linear_flow(log, 0, mid, xi))
    rows.append(("semigroup_max_difference", float(mid), float(np.max(np.abs(direct - composed)))))
    w = log.weights
    for k in range(cfg["linearize.pairs"]):
        a = random_smooth_field(f.points.shape, rng)
        b = random_smooth_field(f.points.shape, rng)
        lhs = pairing(linear_flow(log, 0, steps, a), b, w)
        rhs = pairing(a, adjoint_flow(log, steps, 0, b), w)
        scale = np.sqrt(pairing(a, a, w) * pairing(b, b, w))
        rows.append(("duality_relative_gap", float(k), abs(lhs - rhs) / scale))
    h0 = cfg["linearize.richardson_h"]
    hs = (h0, h0 / 2, h0 / 4)
    for hh, err in zip(hs, richardson_study(f, log, xi, hs)):
        rows.append(("richardson_error", hh, err))
    write_table(os.path.join(out, "linearize.csv"), ("check", "parameter", "value"), rows)
    for name, p, v in rows:
        print(f"{name}[{p!r}] = {v!r}")
    return EXIT_OK


def cmd_check_invariance(cfg, out):
    from .flow import miwf_velocity
    from .moebius import conformal_energy_check, invariance_residual

    _prepare(cfg, out)
    f = surface_from_config(cfg)
    try:
        phi = cfgmod.build_map(cfg.generators, f.n)
    except ValueError as exc:
        raise ValidationError("map", str(exc)) from None
    delta = cfg["flow.min_a0sq"]
    res = invariance_residual(phi, f, lambda g: miwf_velocity(g, delta=delta))
    w0, w1, dw = conformal_energy_check(phi, f)
    rows = [("invariance_residual", res), ("willmore_energy", w0), ("willmore_energy_mapped", w1),
            ("energy_difference", dw)]
    write_table(os.path.join(out, "invariance.csv"), ("quantity", "value"), rows)
    for name, v in rows:
        print(f"{name} = {v!r}")
    return EXIT_OK


def cmd_hopf(cfg, out):
    _prepare(cfg, out)
    gamma = curve_from_config(cfg)
    geo = hopf.curve_geometry(gamma)
    speed = np.linalg.norm(hopf.curve_flow_velocity(gamma, geo), axis=1)
    print(f"elastic_energy = {hopf.elastic_energy(gamma, geo)!r}")
    print(f"max_abs_kappa = {float(np.max(np.abs(geo.kappa)))!r}")
    print(f"max_speed = {float(np.max(speed))!r}")
    curves, energies = hopf.run_curve_flow(gamma, cfg["hopf.steps"], cfg["hopf.safety"])
    write_table(os.path.join(out, "hopf_flow.csv"), ("step", "elastic_energy"),
                [(k, e) for k, e in enumerate(energies)])
    W, Wt, rel = hopf.willmore_elastic_check(curves[-1], cfg["hopf.n_theta"])
    write_table(os.path.join(out, "hopf_check.csv"), ("quantity", "value"),
                [("willmore_energy_hopf_torus", W), ("pi_times_elastic_energy", Wt), ("relative_difference", rel)])
    print(f"willmore_energy_hopf_torus = {W!r}\npi_times_elastic_energy = {Wt!r}\nrelative_difference = {rel!r}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "energy": cmd_energy,
    "linearize": cmd_linearize,
    "check-invariance": cmd_check_invariance,
    "hopf": cmd_hopf,
}


def build_parser():
    p = argparse.ArgumentParser(prog="miwf", description="Möbius-invariant Willmore flow lab")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration key (repeatable)")
    p.add_argument("--out", help="output directory (default: output.dir, $MIWF_OUT_DIR, ./miwf_out)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.parse_config(args.config, args.overrides)
        return COMMANDS[args.command](cfg, cfg.out_dir(args.out))
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalHalt as exc:
        print(f"halt: {exc.reason}: {exc}", file=sys.stderr)
        return EXIT_HALT
    except (MIWFError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
