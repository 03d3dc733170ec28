"""Experiment harness: config parsing, single runs, epsilon sweeps, table output.

Usage::

    pfconfluence run --set epsilon=0.01 --out runs/eps0.01
    pfconfluence table1 --out tables --parallel 4
    pfconfluence table2 --epsilons 0.025,0.003 --out tables
    pfconfluence sweep --config base.ini --out sweep
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import detect_dip, jump_from_track, track_boundaries
from .model import ConfigError, RunConfig, theta_from_sigma
from .solver import RunRecord, run_simulation

logger = logging.getLogger(__name__)

EXIT_CLEAN, EXIT_ERROR, EXIT_DIVERGED = 0, 1, 2
DEFAULT_EPSILONS = (0.025, 0.01, 0.007, 0.005, 0.003)
DIP_PROFILE_OFFSETS = (-0.002, 0.0, 0.002)

_LIST_KEYS = {"probe_radii", "snapshot_times"}
_STR_KEYS = {"stefan_jump_orientation", "bc_u", "bc_sigma"}
_OPTIONAL_KEYS = {"dip_depth"}


def fmt(x) -> str:
    """Decimal text that parses back to the identical double."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


def _coerce(key: str, value):
    if key in _STR_KEYS:
        return str(value).strip()
    if key in _LIST_KEYS:
        if isinstance(value, str):
            return tuple(float(v) for v in value.replace(";", ",").split(",") if v.strip())
        return tuple(float(v) for v in value)
    if key in _OPTIONAL_KEYS and (value is None or str(value).strip().lower() in ("", "none", "auto")):
        return None
    return float(value)


def _apply(values: dict, raw: dict, origin: str) -> None:
    valid = RunConfig.field_names()
    for key, value in raw.items():
        key = key.strip()
        if key not in valid:
            raise ConfigError(f"unknown key {key!r} in {origin}; valid keys: {', '.join(valid)}")
        try:
            values[key] = _coerce(key, value)
        except (TypeError, ValueError):
            raise ConfigError(f"cannot parse {key}={value!r} from {origin}") from None


def _read_file(path: Path) -> dict:
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
        return data.get("config", data)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    # bare key=value files without a section header are accepted too
    parser.read_string(text if text.lstrip().startswith("[") else "[run]\n" + text)
    raw = {}
    for section in parser.sections():
        if section != "sweep":
            raw.update(parser[section])
    return raw


def _read_sweep_epsilons(path: Path | None) -> tuple[float, ...] | None:
    if path is None or path.suffix == ".json":
        return None
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    text = path.read_text()
    parser.read_string(text if text.lstrip().startswith("[") else "[run]\n" + text)
    if parser.has_option("sweep", "epsilons"):
        return tuple(float(v) for v in parser["sweep"]["epsilons"].split(",") if v.strip())
    return None


def parse_config(path: str | Path | None = None, overrides=()) -> RunConfig:
    """Defaults, then the file (INI-style or a ``run_meta.json``), then ``key=value`` overrides."""
    values: dict = {}
    if path is not None:
        path = Path(path)
        _apply(values, _read_file(path), str(path))
    raw = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        raw[key.strip()] = value
    _apply(values, raw, "command line")
    return RunConfig(**values)


@dataclass
class SweepSpec:
    epsilons: tuple[float, ...]
    base: RunConfig = field(default_factory=RunConfig)
    output_dir: Path = Path("sweep")

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps:
            raise ConfigError("sweep needs at least one epsilon")
        if any(not e > 0 for e in eps):
            raise ConfigError(f"all epsilons must be positive, got {eps}")
        self.epsilons = tuple(sorted(eps, reverse=True))
        self.output_dir = Path(self.output_dir)

    def member(self, eps: float) -> RunConfig:
        return self.base.replace(epsilon=eps)

    def member_dir(self, eps: float) -> Path:
        return self.output_dir / f"eps_{eps:g}"


# --- output writers -------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_run_outputs(record: RunRecord, out: Path) -> dict:
    """Write all files for one run and return the dip report dict (or ``{}``)."""
    out.mkdir(parents=True, exist_ok=True)
    cfg = record.config
    track = track_boundaries(record)
    _write_csv(out / "boundary_track.csv", ["t", "r1", "r2"],
               zip(track.times, track.r1, track.r2))

    labels = [f"sigma@{r:g}" for r in record.probe_radii] + [f"u@{r:g}" for r in record.probe_radii]
    _write_csv(out / "probes.csv", ["t", *labels],
               (
                   (t, *ps, *pu)
                   for t, ps, pu in zip(record.times, record.probe_sigma, record.probe_u)
               ))

    for t_req, snap in sorted(record.snapshots.items()):
        theta = theta_from_sigma(snap.sigma, record.mesh)
        _write_csv(out / f"snapshot_t{t_req:g}.csv", ["r", "u", "sigma", "theta"],
                   zip(record.mesh.nodes, snap.u, snap.sigma, theta))

    dip = detect_dip(record)
    report = dip.to_dict() if dip else {}
    if dip:
        report["confluence_radius"] = track.confluence_radius
        _write_dip_profiles(record, dip.t_min, out / "dip_profiles.csv")
    else:
        report = {"dip": None, "confluence_time": track.confluence_time}
    _write_json(out / "dip_report.json", report)

    _write_json(out / "run_meta.json", {
        "config": cfg.to_dict(),
        "status": "diverged" if record.diverged else "clean",
        "diverged": record.diverged,
        "failure": record.failure,
        "n_levels": record.n_levels,
        "final_time": record.final_time,
        "non_dominant_steps": record.non_dominant_steps,
        "under_resolved": cfg.under_resolved,
        "version": __version__,
    })
    return report if dip else {}


def _write_dip_profiles(record: RunRecord, t_min: float, path: Path) -> None:
    # retained-window sigma profiles around t_min
    cols, names = [], []
    for off in DIP_PROFILE_OFFSETS:
        k = int(np.clip(round((t_min + off) / record.config.tau), 0, record.n_levels - 1))
        cols.append(record.window_sigma[k])
        names.append(f"sigma@t{record.times[k]:.6g}")
    _write_csv(path, ["r", *names], zip(record.window_r, *cols))


def cmd_run(cfg: RunConfig, output_dir: str | Path) -> int:
    """Run one simulation and write its files; returns the exit status."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if cfg.under_resolved:
            logger.warning("epsilon/h = %.3g < 3: transition zone under-resolved", cfg.epsilon / cfg.h)
        record = run_simulation(cfg)
        write_run_outputs(record, out)
    except OSError as exc:
        logger.error("I/O failure: %s", exc)
        return EXIT_ERROR
    if record.diverged:
        logger.warning("run diverged: %s", record.failure)
        return EXIT_DIVERGED
    return EXIT_CLEAN


# --- sweeps ---------------------------------------------------------------


def _sweep_member(cfg: RunConfig, out: Path | None) -> dict:
    record = run_simulation(cfg)
    if out is not None:
        write_run_outputs(record, out)
    track = track_boundaries(record)
    row = {"epsilon": cfg.epsilon, "diverged": record.diverged, "failure": record.failure,
           "confluence_time": track.confluence_time}
    dip = detect_dip(record)
    row["dip"] = dip.to_dict() if dip else None
    try:
        cmp = jump_from_track(track, cfg.epsilon, cfg.fit_gap_factor, cfg.fit_window_fraction)
        row["jump"] = {"r1": cmp.r1, "v1": cmp.v1, "r2": cmp.r2, "v2": cmp.v2,
                       "sigma_an": cmp.sigma_an, "window": list(cmp.window)}
    except ValueError as exc:
        logger.warning("eps=%g: no velocity fit (%s)", cfg.epsilon, exc)
        row["jump"] = None
    return row


def run_sweep(spec: SweepSpec, parallel: int = 1, write_runs: bool = True) -> list[dict]:
    """Run every member of the sweep; results come back in ``spec.epsilons`` order."""
    cfgs = [spec.member(e) for e in spec.epsilons]
    dirs = [spec.member_dir(e) if write_runs else None for e in spec.epsilons]
    if parallel > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_sweep_member, cfgs, dirs))
    else:
        rows = [_sweep_member(c, d) for c, d in zip(cfgs, dirs)]
    for row in rows:
        if row["diverged"]:
            logger.warning("eps=%g diverged: %s", row["epsilon"], row["failure"])
    return rows


def table1_rows(rows: list[dict]) -> list[dict]:
    out, prev = [], None
    for row in rows:
        dip = row["dip"] or {}
        t_min = dip.get("t_min")
        out.append({
            "epsilon": row["epsilon"],
            "t_min": t_min,
            "r_min": dip.get("r_min"),
            "sigma_min": dip.get("sigma_min"),
            "dt_min": (t_min - prev) if (t_min is not None and prev is not None) else None,
            "diverged": row["diverged"],
        })
        prev = t_min
    return out


def table2_rows(rows: list[dict]) -> list[dict]:
    out = []
    for row in rows:
        jump = row["jump"] or {}
        dip = row["dip"] or {}
        an, cal = jump.get("sigma_an"), dip.get("amplitude")
        out.append({
            "epsilon": row["epsilon"],
            "r1": jump.get("r1"), "v1": jump.get("v1"),
            "r2": jump.get("r2"), "v2": jump.get("v2"),
            "sigma_an": an, "sigma_cal": cal,
            "gap": abs(an - cal) if an is not None and cal is not None else None,
            "diverged": row["diverged"],
        })
    return out


TABLE1_COLUMNS = ["epsilon", "t_min", "r_min", "sigma_min", "dt_min", "diverged"]
TABLE2_COLUMNS = ["epsilon", "r1", "v1", "r2", "v2", "sigma_an", "sigma_cal", "gap", "diverged"]


def _write_table(path: Path, columns: list[str], rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(path, columns, (
        [("1" if r[c] else "0") if c == "diverged" else r[c] for c in columns] for r in rows
    ))
    return path


def cmd_table1(spec: SweepSpec, parallel: int = 1, rows: list[dict] | None = None) -> Path:
    rows = run_sweep(spec, parallel, write_runs=False) if rows is None else rows
    return _write_table(spec.output_dir / "table1.csv", TABLE1_COLUMNS, table1_rows(rows))


def cmd_table2(spec: SweepSpec, parallel: int = 1, rows: list[dict] | None = None) -> Path:
    rows = run_sweep(spec, parallel, write_runs=False) if rows is None else rows
    return _write_table(spec.output_dir / "table2.csv", TABLE2_COLUMNS, table2_rows(rows))


def read_table(path: str | Path) -> list[dict]:
    """Parse a table CSV back into dicts of floats (empty cells become ``None``)."""
    with Path(path).open(newline="") as fh:
        return [
            {k: (float(v) if v != "" else None) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


# --- entry point ----------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pfconfluence", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("run", "single simulation"),
        ("table1", "dip location/time/minimum per epsilon"),
        ("table2", "analytic vs measured jump amplitude per epsilon"),
        ("sweep", "per-epsilon runs plus both tables"),
    ]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, help="INI-style file or a run_meta.json")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config key (repeatable)")
        sp.add_argument("--out", type=Path, default=Path("out"))
        if name != "run":
            sp.add_argument("--epsilons", help="comma-separated, default: 0.025,0.01,0.007,0.005,0.003")
            sp.add_argument("--parallel", type=int, default=1, metavar="N")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = parse_config(args.config, args.overrides)
        if args.command == "run":
            return cmd_run(cfg, args.out)
        if args.epsilons:
            eps = tuple(float(e) for e in args.epsilons.split(",") if e.strip())
        else:
            eps = _read_sweep_epsilons(args.config) or DEFAULT_EPSILONS
        spec = SweepSpec(eps, cfg, args.out)
        rows = run_sweep(spec, args.parallel, write_runs=args.command == "sweep")
        if args.command in ("table1", "sweep"):
            print(cmd_table1(spec, rows=rows))
        if args.command in ("table2", "sweep"):
            print(cmd_table2(spec, rows=rows))
        return EXIT_DIVERGED if any(r["diverged"] for r in rows) else EXIT_CLEAN
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
