"""Command-line front end: ``phasegeo <subcommand> [flags]``.

Any flag may also come from a config file (``--config run.toml`` or
``run.json``) holding flat ``key = value`` pairs named like the long flags
(dashes or underscores).  Flags given on the command line win.

Exit codes: 0 ok, 2 usage, 3 data or I/O, 4 numerical.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, core, experiments
from .errors import PhaseGeoError

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

SUBCOMMANDS = ("gen", "solve", "figure1", "sweep", "landscape", "certify", "trs-bench")

# (flag, dest, type, help)
COMMON_FLAGS = [
    ("--n", "n", int, "signal dimension"),
    ("--m", "m", int, "number of measurements (default ceil(5 n log n))"),
    ("--ratio-list", "ratio_list", str, "comma-separated m/n ratios for sweep, e.g. 4,5,6"),
    ("--trials", "trials", int, "number of trials (samples for certify, instances for trs-bench)"),
    ("--seed", "seed", int, "master seed"),
    ("--model", "model", str, "measurement model: gaussian or masked-dct"),
    ("--algo", "algo", str, "trm-fixed, trm-adaptive or gd"),
    ("--delta", "delta", float, "trust radius (fixed) or initial radius (adaptive)"),
    ("--mu", "mu", float, "gradient-descent step size"),
    ("--tol", "tol", float, "gradient tolerance (TRS eps for trs-bench)"),
    ("--max-iters", "max_iters", int, "iteration cap"),
    ("--log-base", "log_base", float, "log base in m = 5 n log n (default e)"),
    ("--init", "init", str, "random (ball of radius R0) or target"),
    ("--out", "out", str, "output path (stdout when omitted)"),
    ("--format", "format", str, "csv or json"),
]

EXTRA_FLAGS = {
    "landscape": [
        ("--grid-mode", "grid_mode", str, "population-complex, population-real-gaussian or empirical"),
        ("--grid-lo", "grid_lo", float, "lower end of both grid axes"),
        ("--grid-hi", "grid_hi", float, "upper end of both grid axes"),
        ("--grid-steps", "grid_steps", int, "grid points per axis"),
        ("--num-masks", "num_masks", int, "masks per masked-DCT ensemble"),
        ("--mask-trials", "mask_trials", int, "masked-DCT ensembles averaged"),
    ],
    "certify": [("--samples", "samples", int, "empirical certificate points per region")],
    "solve": [
        ("--ensemble", "ensemble", str, "ensemble file written by gen"),
        ("--target", "target", str, "target signal file written by gen"),
    ],
}

SPEC_KEYS = {dest for _, dest, _, _ in COMMON_FLAGS} | {
    dest for flags in EXTRA_FLAGS.values() for _, dest, _, _ in flags
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phasegeo", description="Phase retrieval landscape and solver toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True
    helps = {
        "gen": "generate a target signal and measurement ensemble",
        "solve": "run one solve and write its trace",
        "figure1": "gradient descent from many random starts on one instance",
        "sweep": "recovery probability against m/n",
        "landscape": "objective values on a 2D grid",
        "certify": "region coverage scan and empirical certificates",
        "trs-bench": "trust-region subproblem solver against the eigen oracle",
    }
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=helps[name], description=helps[name])
        sp.add_argument("--config", help="JSON or TOML file of flag values")
        for flag, dest, typ, hlp in COMMON_FLAGS + EXTRA_FLAGS.get(name, []):
            sp.add_argument(flag, dest=dest, type=typ, default=None, help=hlp)
    return p


def load_config(path) -> dict:
    """Flat key/value config from a ``.json`` or ``.toml`` file."""
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".json":
        data = json.loads(raw.decode("utf-8"))
    else:
        data = tomllib.loads(raw.decode("utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a table of key/value pairs")
    out = {}
    for k, v in data.items():
        key = k.replace("-", "_")
        if key not in SPEC_KEYS:
            raise ValueError(f"{path}: unknown config key {k!r}")
        out[key] = v
    return out


def _parse_ratios(v):
    if v is None or isinstance(v, list):
        return v
    return [float(t) for t in str(v).split(",") if t.strip()]


def spec_from_args(args: argparse.Namespace) -> experiments.ExperimentSpec:
    values = load_config(args.config) if args.config else {}
    for key in SPEC_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    values["ratios"] = _parse_ratios(values.pop("ratio_list", None))
    values = {k: v for k, v in values.items() if v is not None}
    kind = args.command
    return experiments.ExperimentSpec(kind=kind, **values)


def run_gen(spec: experiments.ExperimentSpec, stdout) -> int:
    n = spec.n or 64
    m = spec.m or experiments.default_m(n, spec.log_base)
    x, ens = experiments.make_instance(spec, n, m)
    info = {"model": ens.model, "n": ens.n, "m": ens.m, "seed": spec.seed}
    if spec.out:
        out = Path(spec.out)
        core.save_ensemble(ens, out)
        target = out.with_suffix(".target.bin")
        core.save_signal(x, target)
        info.update(ensemble=str(out), target=str(target))
    else:
        info["note"] = "no --out given; nothing written"
    stdout.write(json.dumps(info, sort_keys=True) + "\n")
    return EXIT_OK


def execute(spec: experiments.ExperimentSpec, stdout) -> int:
    if spec.kind == "gen":
        return run_gen(spec, stdout)
    result = experiments.RUNNERS[spec.kind](spec)
    if spec.out:
        experiments.write_result(result, spec, spec.out)
    elif spec.format == "json":
        stdout.write(json.dumps(experiments._jsonable(result.to_json_dict(spec)), indent=2, sort_keys=True) + "\n")
    else:
        experiments.write_rows_csv(result.columns, result.rows, stdout)
    return EXIT_OK


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse reports usage errors with status 2
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        spec = spec_from_args(args)
    except OSError as e:
        stderr.write(f"phasegeo: error: {e.filename or ''}: {e.strerror or e}\n")
        return EXIT_DATA
    except (ValueError, TypeError) as e:
        stderr.write(f"phasegeo: error: {e}\n")
        return EXIT_USAGE
    try:
        return execute(spec, stdout)
    except PhaseGeoError as e:
        stderr.write(f"phasegeo: error: {e}\n")
        return e.exit_code
    except OSError as e:
        stderr.write(f"phasegeo: error: {e.filename or ''}: {e.strerror or e}\n")
        return EXIT_DATA
    except FloatingPointError as e:
        stderr.write(f"phasegeo: numerical error: {e}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
