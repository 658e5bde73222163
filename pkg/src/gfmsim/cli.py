"""Command-line front end.

Subcommands: ``run`` (simulate a built-in or a scenario file), ``eig-sweep``
(eigenvalue loci over the impedance gain plus the critical gain),
``droop`` (reactive droop curves), ``select-k`` (gain trade-off table),
``list`` (built-in scenarios).  Output files are written atomically.

Exit codes: 0 success, 1 usage, 2 scenario/config problem, 3 numeric
failure during simulation.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np

from . import droop as droop_mod
from . import scenarios
from .engine import run_simulation
from .errors import (GfmSimError, NumericBlowupError, OscillatorCollapseError,
                     ScenarioError)
from .smallsignal import ModelContext, critical_gain, sweep_gain
from .vim import VimParams

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".gfmsim-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_call(path: str, writer):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".gfmsim-")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_spec(ref: str) -> scenarios.ScenarioSpec:
    if ref in scenarios.builtin_names():
        return scenarios.builtin(ref)
    if os.path.exists(ref):
        with open(ref) as fh:
            return scenarios.parse_scenario(fh.read())
    raise ScenarioError(
        [f"'{ref}' is neither a built-in scenario nor an existing file"])


def _cmd_run(args) -> int:
    spec = _load_spec(args.scenario)
    log = run_simulation(spec.to_setup())
    metrics = scenarios.scenario_metrics(spec, log)
    os.makedirs(args.out_dir, exist_ok=True)
    log_path = os.path.join(args.out_dir, f"{spec.name}_log.csv")
    met_path = os.path.join(args.out_dir, f"{spec.name}_metrics.txt")
    _atomic_call(log_path, log.to_csv)
    _atomic_write(met_path, scenarios.metrics_text(metrics))
    print(f"wrote {log_path}")
    print(f"wrote {met_path}")
    for key in ("sag_pct", "sag_vs_unsupported_pct", "p_post", "q_post"):
        if key in metrics:
            print(f"{key}: {metrics[key]:.4g}")
    return EXIT_OK


def _study_context(args) -> ModelContext:
    from .loops import table_gains
    from .scenarios import base_defaults
    spec = base_defaults()
    circuit = spec.circuit
    # stability study runs against the loaded post-event network
    from .circuit import LoadBranch
    circuit.loads.append(LoadBranch(2.5, 2e-3, 0.0))
    return ModelContext(circuit=circuit, gains=table_gains(), osc=spec.osc,
                        vim=VimParams(), variant=args.variant)


def _cmd_eig_sweep(args) -> int:
    ctx = _study_context(args)
    sweep = sweep_gain(args.k_min, args.k_max, args.steps, ctx,
                       recompute_op=not args.fixed_op)
    os.makedirs(args.out_dir, exist_ok=True)
    loci_path = os.path.join(args.out_dir, "eig_loci.csv")
    _atomic_call(loci_path, sweep.to_csv)
    manifest_path = os.path.join(args.out_dir, "state_labels.txt")
    _atomic_write(manifest_path, ctx.model_at(args.k_min).label_manifest())
    kc = critical_gain(ctx, args.k_min, max(args.k_max, 1.0),
                       recompute_op=not args.fixed_op)
    print(f"wrote {loci_path}")
    print(f"wrote {manifest_path}")
    if kc is None:
        print("k_crit: no crossing on the searched range")
    else:
        print(f"k_crit: {kc:.4g}")
    return EXIT_OK


def _cmd_droop(args) -> int:
    spec = scenarios.base_defaults()
    z = droop_mod.source_impedance_magnitude(
        spec.circuit.r_f, spec.circuit.l_f, spec.circuit.r_g,
        spec.circuit.l_g, spec.grid.omega)
    os.makedirs(args.out_dir, exist_ok=True)
    ks = [float(s) for s in args.k.split(",")]
    for k in ks:
        curve = droop_mod.reactive_curve(
            spec.osc, k, z, v_lo=args.v_min * spec.osc.v_nominal)
        path = os.path.join(args.out_dir, f"droop_k{k:g}.csv")
        _atomic_call(path, curve.to_csv)
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_select_k(args) -> int:
    spec = scenarios.base_defaults()
    z = droop_mod.source_impedance_magnitude(
        spec.circuit.r_f, spec.circuit.l_f, spec.circuit.r_g,
        spec.circuit.l_g, spec.grid.omega)
    i_max_rms = spec.gains.i_max / np.sqrt(2.0)
    sel = droop_mod.select_k(spec.osc, z, i_max_rms, args.sag, args.retention)
    print(sel.table_text())
    if sel.feasible:
        print(f"selected k: {sel.k:.4g} ohm/A")
        return EXIT_OK
    print(f"infeasible: binding constraint is {sel.binding_constraint}")
    return EXIT_CONFIG


def _cmd_list(_args) -> int:
    for name in scenarios.builtin_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gfmsim",
                                description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="simulate a scenario")
    pr.add_argument("scenario", help="built-in name or scenario file path")
    pr.add_argument("--out-dir", default=".")
    pr.set_defaults(fn=_cmd_run)

    pe = sub.add_parser("eig-sweep", help="eigenvalue loci over k")
    pe.add_argument("--k-min", type=float, default=0.0)
    pe.add_argument("--k-max", type=float, default=0.5)
    pe.add_argument("--steps", type=int, default=26)
    pe.add_argument("--variant", choices=("verbatim", "standard"),
                    default="verbatim")
    pe.add_argument("--fixed-op", action="store_true",
                    help="freeze the operating point at k-min")
    pe.add_argument("--out-dir", default=".")
    pe.set_defaults(fn=_cmd_eig_sweep)

    pd = sub.add_parser("droop", help="reactive droop curve CSVs")
    pd.add_argument("--k", default="0,0.05,0.15",
                    help="comma-separated impedance gains")
    pd.add_argument("--v-min", type=float, default=0.7,
                    help="curve lower end as a fraction of nominal")
    pd.add_argument("--out-dir", default=".")
    pd.set_defaults(fn=_cmd_droop)

    ps = sub.add_parser("select-k", help="impedance-gain trade-off")
    ps.add_argument("--sag", type=float, required=True,
                    help="target sag depth in percent")
    ps.add_argument("--retention", type=float, required=True,
                    help="required fraction of plain Q at 5%% sag")
    ps.set_defaults(fn=_cmd_select_k)

    pl = sub.add_parser("list", help="list built-in scenarios")
    pl.set_defaults(fn=_cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.fn(args)
    except ScenarioError as exc:
        for problem in exc.problems:
            print(f"scenario error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericBlowupError, OscillatorCollapseError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GfmSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
