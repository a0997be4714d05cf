"""Command-line driver: ``afpwiener run --module afp --seed 1 ...``.

Exit status: 0 when every criterion passes, 1 when a statistical criterion
fails, 2 on invalid configuration or any malfunction (with a JSON error
object on stderr).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import traceback

from afpwiener.criteria import ExperimentConfig, RunReport, run_checks

SCHEMAS = {
    "afp_bias": ["n", "estimate", "stderr", "target", "z"],
    "ecf": ["experiment", "n", "probe", "emp_re", "emp_im", "ref_re", "ref_im", "se", "z"],
    "ks": ["experiment", "n", "D", "p_value", "samples"],
    "euler_rates": ["system", "n", "strong_err", "stderr", "weak_err"],
    "ratefit": ["system", "slope", "slope_se", "r2"],
}

_INT_KEYS = {"master_seed", "samples", "grid"}
_ALIASES = {"seed": "master_seed", "n": "n_list", "element": "X"}


class ConfigError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(path: str, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[h]) for h in header])


def read_config_file(path: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            k = _ALIASES.get(k, k)
            if k not in ExperimentConfig.__dataclass_fields__:
                raise ConfigError(f"{path}:{lineno}: unknown key {k!r}")
            out[k] = v
    return out


def _coerce(key: str, value):
    if value is None:
        return None
    try:
        if key in _INT_KEYS:
            return int(value)
        if key == "n_list":
            if isinstance(value, str):
                value = [s for s in value.replace(",", " ").split() if s]
            return tuple(int(v) for v in value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="afpwiener", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run the acceptance experiments of one module or all")
    r.add_argument("--module", choices=["afp", "isometry", "chaos", "euler", "all"])
    r.add_argument("--seed", dest="master_seed", type=int)
    r.add_argument("--samples", type=int)
    r.add_argument("--grid", type=int, help="grid steps N (isometry/chaos) or N_fine (euler)")
    r.add_argument("--n", dest="n_list", type=int, action="append", help="frequency; repeatable")
    r.add_argument("--theta", choices=["cosine", "sine", "rademacher"])
    r.add_argument("--map", choices=["sign1d", "rotation2d"])
    r.add_argument("--element", dest="X", choices=["h1", "i2"])
    r.add_argument("--system", choices=["special", "generic"])
    r.add_argument("--out")
    r.add_argument("--config", help="flat key=value file; flags override it")
    return p


def config_from_args(argv) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    for k in ExperimentConfig.__dataclass_fields__:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in values.items()})
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def write_report(report: RunReport, out: str) -> None:
    os.makedirs(out, exist_ok=True)
    for name, header in SCHEMAS.items():
        write_csv(os.path.join(out, f"{name}.csv"), header, getattr(report.tables, name))
    summary = {
        "config": report.config,
        "criteria": [c.as_dict() for c in report.criteria],
        "status": report.status,
        "timings": report.timings,
    }
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, default=float)


def _fail(kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message, "status": "ERROR"}), file=sys.stderr)
    return 2


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = config_from_args(argv)
    except ConfigError as exc:
        return _fail("invalid_config", str(exc))
    except OSError as exc:
        return _fail("config_io", str(exc))
    try:
        report = run_checks(cfg)
        write_report(report, cfg.out)
    except Exception as exc:  # malfunction, not a verdict
        traceback.print_exc(file=sys.stderr)
        return _fail(type(exc).__name__, str(exc))
    for c in report.criteria:
        print(c.line())
    print(f"overall: {report.status}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
