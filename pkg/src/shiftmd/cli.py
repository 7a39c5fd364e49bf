"""Batch front-end: gen-data | train | quantize | eval | md | analyze | cost.

Every run writes its artifacts plus a resolved_config.json snapshot and a log
into one output directory, so any result can be reproduced from the files it
sits next to. Defaults can come from a `key = value` config file (--config);
command-line flags win. The SHIFTMD_OUT environment variable sets the default
output root.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, costmodel, dataset as ds, md, train as tr
from .net import load_model, save_model
from .quant import QuantConfig


def parse_config_file(path) -> dict[str, str]:
    """Simple `key = value` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line without '=': {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _default_out(subcommand: str) -> str:
    root = os.environ.get("SHIFTMD_OUT", "runs")
    return str(Path(root) / subcommand)


class _Run:
    """Output directory plus logging and the resolved-config snapshot."""

    def __init__(self, outdir, args: argparse.Namespace):
        self.dir = Path(outdir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._log = open(self.dir / "log.txt", "w")
        resolved = {k: v for k, v in vars(args).items() if k != "func"}
        resolved["argv_resolved_at"] = time.strftime("%Y-%m-%d %H:%M:%S")
        (self.dir / "resolved_config.json").write_text(
            json.dumps(resolved, indent=1, sort_keys=True, default=str)
        )

    def log(self, msg: str):
        print(msg)
        self._log.write(msg + "\n")
        self._log.flush()

    def close(self):
        self._log.close()


def _add_common(p: argparse.ArgumentParser, subcommand: str):
    p.add_argument("--config", help="key = value config file with flag defaults")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(_subcommand=subcommand)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen_data(args) -> int:
    run = _Run(args.out, args)
    params = ds.SurrogateParams(
        r0=float(args.r0), theta0=float(args.theta0),
        k_bond=float(args.k_bond), k_angle=float(args.k_angle),
    )
    data = ds.generate_dataset(params, int(args.n), float(args.amplitude), int(args.seed))
    ds.write_dataset(data, run.dir)
    run.log(f"wrote {len(data.train_indices)} train / {len(data.test_indices)} test "
            f"frames to {run.dir}")
    run.close()
    return 0


def cmd_train(args) -> int:
    run = _Run(args.out, args)
    data = ds.load_dataset(args.data)
    arch = [int(v) for v in str(args.arch).split(",")]
    cfg = tr.TrainConfig(
        epochs=int(args.epochs), batch_size=int(args.batch_size),
        learning_rate=float(args.lr), lr_decay=float(args.lr_decay),
        seed=int(args.seed),
    )
    with open(run.dir / "train_log.txt", "w") as fh:
        model = tr.train_cnn(data, arch, cfg, log=lambda s: fh.write(s + "\n"))
    save_model(model, run.dir / "model.json")
    rmse = tr.eval_force_rmse(model, data, md.Engine.FLOAT)
    run.log(f"float model test RMSE {rmse:.4f} meV/A -> {run.dir / 'model.json'}")
    run.close()
    return 0


def cmd_quantize(args) -> int:
    run = _Run(args.out, args)
    model = load_model(args.model)
    data = ds.load_dataset(args.data)
    cfg = tr.TrainConfig(
        epochs=int(args.epochs), batch_size=int(args.batch_size),
        learning_rate=float(args.lr), lr_decay=float(args.lr_decay),
        seed=int(args.seed),
    )
    qcfg = QuantConfig(k=int(args.k))
    with open(run.dir / "train_log.txt", "w") as fh:
        qmodel = tr.finetune_sqnn(model, data, cfg, qcfg, log=lambda s: fh.write(s + "\n"))
    save_model(qmodel, run.dir / "model_q.json")
    rmse = tr.eval_force_rmse(qmodel, data, md.Engine.SQNN)
    run.log(f"K={qcfg.k} shift model test RMSE {rmse:.4f} meV/A -> "
            f"{run.dir / 'model_q.json'}")
    run.close()
    return 0


def cmd_eval(args) -> int:
    run = _Run(args.out, args)
    model = load_model(args.model)
    data = ds.load_dataset(args.data)
    engine = md.Engine(args.engine)
    rmse = tr.eval_force_rmse(model, data, engine)
    pred, ref = tr.force_components(model, data.test_frames, engine)
    scatter = analysis.force_scatter(pred, ref)
    np.savetxt(
        run.dir / "scatter.tsv", scatter.points,
        header="predicted_mev_per_A reference_mev_per_A", comments="# ",
    )
    report = {"engine": engine.value, "rmse_mev_per_A": rmse, "n_components": int(scatter.points.shape[0] * 2)}
    (run.dir / "rmse.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    run.log(f"{engine.value} test RMSE {rmse:.4f} meV/A ({run.dir / 'scatter.tsv'})")
    run.close()
    return 0


def cmd_md(args) -> int:
    run = _Run(args.out, args)
    engine = md.Engine(args.engine)
    model = load_model(args.model) if args.model else None
    config = md.SimConfig(
        dt=float(args.dt), steps=int(args.steps),
        temperature_init=float(args.temp), seed=int(args.seed), engine=engine,
    )
    traj = md.run_md(config, model)
    md.write_trajectory_binary(traj, run.dir / "traj.bin")
    if int(args.xyz_stride) > 0:
        stride = int(args.xyz_stride)
        thin = md.Trajectory(
            traj.species, traj.masses, traj.times[::stride],
            traj.positions[::stride], traj.velocities[::stride],
            traj.forces[::stride], traj.energies[::stride],
        )
        md.write_trajectory_extxyz(thin, run.dir / "traj.extxyz")
    run.log(f"{engine.value} MD: {config.steps} steps of {config.dt} fs -> {run.dir}")
    run.close()
    return 0


def cmd_analyze(args) -> int:
    run = _Run(args.out, args)
    traj = md.read_trajectory_binary(args.traj)
    stats = analysis.structural_stats(traj)
    summary = {
        "bond_mean_A": stats.bond_mean, "bond_std_A": stats.bond_std,
        "angle_mean_deg": stats.angle_mean, "angle_std_deg": stats.angle_std,
    }
    run.log(f"bond {stats.bond_mean:.4f} +- {stats.bond_std:.4f} A, "
            f"angle {stats.angle_mean:.3f} +- {stats.angle_std:.3f} deg")
    if args.vdos:
        spec = analysis.vdos(traj)
        np.savetxt(
            run.dir / "vdos.tsv", np.column_stack([spec.frequencies, spec.dos]),
            header="wavenumber_cm-1 dos", comments="# ",
        )
        np.savetxt(
            run.dir / "vdos_peaks.tsv", np.array(spec.peaks or np.zeros((0, 2))),
            header="wavenumber_cm-1 height", comments="# ",
        )
        summary["vdos_peaks_cm-1"] = [p[0] for p in spec.peaks]
        run.log("vdos peaks: " + ", ".join(f"{p[0]:.1f}" for p in spec.peaks))
    if args.ref_stats:
        reference = json.loads(Path(args.ref_stats).read_text())
        table = analysis.error_report(
            reference, {"run": {k: summary[k] for k in reference}}
        )
        (run.dir / "error_report.txt").write_text(table + "\n")
        run.log(table)
    (run.dir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    run.close()
    return 0


def cmd_cost(args) -> int:
    run = _Run(args.out, args)
    arch = [int(v) for v in str(args.arch).split(",")]
    costs = costmodel.UnitCosts()
    if args.costs:
        costs = costmodel.UnitCosts(**json.loads(Path(args.costs).read_text()))
    k = int(args.k)
    rs = costmodel.estimate_cost(arch, costmodel.SqnnScheme(k=k), costs)
    rm = costmodel.estimate_cost(arch, costmodel.FqnnScheme(bits=int(args.fqnn_bits)), costs)
    ratio = costmodel.shift_vs_mult_ratio(arch, k, costs)
    report = {
        "arch": arch, "k": k,
        "shift_total": rs.total, "shift_breakdown": rs.breakdown,
        "mult_total": rm.total, "mult_breakdown": rm.breakdown,
        "shift_vs_mult_ratio": ratio,
        "activation_ratio": costmodel.activation_cost_ratio(costs),
    }
    (run.dir / "cost_report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    run.log(f"arch {arch} K={k}: shift {rs.total} vs mult {rm.total} transistors, "
            f"datapath ratio {ratio:.3f}, activation ratio "
            f"{report['activation_ratio']:.3f}")
    run.close()
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="shiftmd")
    sub = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("gen-data", help="generate a labeled surrogate dataset")
    p.add_argument("--n", default=1000)
    p.add_argument("--amplitude", default=0.1)
    p.add_argument("--seed", default=0)
    p.add_argument("--r0", default=0.969)
    p.add_argument("--theta0", default=104.88)
    p.add_argument("--k-bond", dest="k_bond", default=48.0)
    p.add_argument("--k-angle", dest="k_angle", default=3.6)
    _add_common(p, "gen-data")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the float baseline model")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", default="3,3,3,2")
    p.add_argument("--epochs", default=300)
    p.add_argument("--batch-size", dest="batch_size", default=32)
    p.add_argument("--lr", default=0.1)
    p.add_argument("--lr-decay", dest="lr_decay", default=0.995)
    p.add_argument("--seed", default=0)
    _add_common(p, "train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("quantize", help="fine-tune with power-of-two weights")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", default=3)
    p.add_argument("--epochs", default=150)
    p.add_argument("--batch-size", dest="batch_size", default=32)
    p.add_argument("--lr", default=0.02)
    p.add_argument("--lr-decay", dest="lr_decay", default=0.995)
    p.add_argument("--seed", default=1)
    _add_common(p, "quantize")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("eval", help="force RMSE of a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--engine", default="sqnn", choices=[e.value for e in md.Engine if e != md.Engine.SURROGATE])
    _add_common(p, "eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("md", help="run molecular dynamics")
    p.add_argument("--model", default=None)
    p.add_argument("--engine", default="sqnn", choices=[e.value for e in md.Engine])
    p.add_argument("--steps", default=10000)
    p.add_argument("--dt", default=2.0)
    p.add_argument("--temp", default=300.0)
    p.add_argument("--seed", default=0)
    p.add_argument("--xyz-stride", dest="xyz_stride", default=100,
                   help="write every Nth frame to extxyz; 0 disables")
    _add_common(p, "md")
    p.set_defaults(func=cmd_md)

    p = sub.add_parser("analyze", help="structure stats and vibrational spectrum")
    p.add_argument("--traj", required=True, help="binary trajectory file")
    p.add_argument("--vdos", action="store_true")
    p.add_argument("--ref-stats", dest="ref_stats", default=None,
                   help="JSON of reference values for an error table")
    _add_common(p, "analyze")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("cost", help="transistor-count comparison of datapaths")
    p.add_argument("--arch", default="3,3,3,2")
    p.add_argument("--k", default=3)
    p.add_argument("--fqnn-bits", dest="fqnn_bits", default=16)
    p.add_argument("--costs", default=None, help="JSON file overriding unit costs")
    _add_common(p, "cost")
    p.set_defaults(func=cmd_cost)

    for name, action in sub.choices.items():
        registry[name] = action
    return parser, registry


def run_command(argv: list[str]) -> int:
    parser, subs = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            file_vals = parse_config_file(args.config)
            sp = subs[args._subcommand]
            valid = {a.dest for a in sp._actions}
            unknown = set(file_vals) - valid
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
            coerced = {
                k: (v.lower() == "true" if v.lower() in ("true", "false") else v)
                for k, v in file_vals.items()
            }
            # explicit command-line flags still win over these defaults
            sp.set_defaults(**coerced)
            args = parser.parse_args(argv)
        if args.out is None:
            args.out = _default_out(args._subcommand)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
