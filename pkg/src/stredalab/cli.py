"""Command line front end: single runs, B-sweeps, oracle checks and cache maintenance.

Configuration is an INI file with the sections [model], [run], [window],
[sweep] and (for the ``oracle`` verb) [oracle].  Every key is checked
before any diagonalization starts; unknown keys are errors.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from .markers import MARKER_FIELDS, BulkWindow, MarkerError
from .model import HamiltonianSpec, ModelError, build_hamiltonian
from .oracle import (BlochGrid, OracleError, brute_force_identities, diophantine_t,
                     fukui_hatsugai)
from .response import STREDA_FIELDS, PipelineError, analyze
from .spectral import EigenCache, SpectralError

log = logging.getLogger("stredalab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

SWEEP_COLUMNS = ("B", "E_F", "gap_lower", "gap_upper", "rank_below", "isdos", "fd_derivative",
                 "ch_up", "ch_down", "sch", "sigma_contour", "residual_streda_fd",
                 "residual_streda_kubo", "gapped_flag")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


# ---------------------------------------------------------------- config

_MODEL_TYPES = {f.name: f.type for f in fields(HamiltonianSpec)}
_RUN_KEYS = {"fermi_energy", "contour_nodes", "delta_B", "output_dir", "cache",
             "precision_digits", "workers"}
_WINDOW_KEYS = {"lower", "upper", "min_buffer"}
_SWEEP_KEYS = {"B_start", "B_end", "steps"}
_ORACLE_KEYS = {"instances", "max_dim", "seed", "contour_nodes", "fluxes", "kgrid"}
_SECTIONS = {"model": set(_MODEL_TYPES), "run": _RUN_KEYS, "window": _WINDOW_KEYS,
             "sweep": _SWEEP_KEYS, "oracle": _ORACLE_KEYS}


@dataclass(frozen=True)
class SweepConfig:
    B_start: float
    B_end: float
    steps: int

    def grid(self) -> np.ndarray:
        return np.linspace(self.B_start, self.B_end, self.steps)


@dataclass(frozen=True)
class WindowConfig:
    lower: tuple[float, float] | None = None
    upper: tuple[float, float] | None = None
    min_buffer: float | None = None

    def build(self, geometry) -> BulkWindow:
        if self.lower is None:
            return BulkWindow.default(geometry, self.min_buffer)
        buf = 1.0 if self.min_buffer is None else self.min_buffer
        return BulkWindow.rectangle(geometry, self.lower, self.upper, buf)


@dataclass(frozen=True)
class OracleConfig:
    instances: int = 20
    max_dim: int = 200
    seed: int = 0
    contour_nodes: int = 128
    fluxes: tuple[str, ...] = ("1/3", "1/4", "1/5")
    kgrid: int = 12


@dataclass(frozen=True)
class RunConfig:
    model: HamiltonianSpec | None
    fermi_energy: float | None
    output_dir: Path
    contour_nodes: int = 128
    delta_B: float = 1e-3
    cache: bool = False
    precision_digits: int = 12
    workers: int | None = None
    window: WindowConfig = field(default_factory=WindowConfig)
    sweep: SweepConfig | None = None
    oracle: OracleConfig = field(default_factory=OracleConfig)

    @property
    def field_B(self) -> float:
        return self.model.B2

    @property
    def cache_dir(self) -> Path:
        return self.output_dir / "cache"


def _get(section, key, conv, what):
    raw = section[key]
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section.name}.{key}: cannot parse {raw!r} as {what}") from exc


def _pair(raw: str) -> tuple[float, float]:
    parts = [float(p) for p in raw.replace(";", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise ValueError("need two numbers")
    return tuple(parts)


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _int(raw: str) -> int:
    f = float(raw)
    if f != int(f):
        raise ValueError(raw)
    return int(f)


def _fraction(raw: str) -> float:
    return float(Fraction(raw.strip()))


def _parse_model(sec) -> HamiltonianSpec:
    kw = {}
    for key in sec:
        if key in ("backend", "boundary"):
            kw[key] = sec[key].strip()
        elif key == "potential_amplitudes":
            kw[key] = _get(sec, key, _pair, "two numbers")
        elif key in ("half_width_L", "points_per_cell"):
            kw[key] = _get(sec, key, _int, "an integer")
        else:
            kw[key] = _get(sec, key, _fraction, "a number")
    try:
        return HamiltonianSpec(**kw)
    except ModelError as exc:
        raise ConfigError(f"model: {exc}") from exc


def _read(path: Path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str        # keys are case sensitive (B_start, delta_B)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for name in cp.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        for key in cp[name]:
            if key not in _SECTIONS[name]:
                raise ConfigError(f"{name}.{key}: unknown key")
    return cp


def load_config(path, verb: str = "run") -> RunConfig:
    """Parse and validate ``path`` for ``verb`` (run, sweep or oracle)."""
    path = Path(path)
    cp = _read(path)
    run = cp["run"] if cp.has_section("run") else None
    if run is None or "output_dir" not in run:
        raise ConfigError("run.output_dir: missing")
    out = Path(run["output_dir"])
    if not out.is_absolute():
        out = path.parent / out

    model = fermi = None
    if verb in ("run", "sweep"):
        if not cp.has_section("model"):
            raise ConfigError("[model] section missing")
        model = _parse_model(cp["model"])
        if "fermi_energy" not in run:
            raise ConfigError("run.fermi_energy: missing")
        fermi = _get(run, "fermi_energy", float, "a number")
        if not math.isfinite(fermi):
            raise ConfigError("run.fermi_energy: must be finite")
    elif cp.has_section("model"):
        model = _parse_model(cp["model"])

    kw = {}
    if "contour_nodes" in run:
        kw["contour_nodes"] = _get(run, "contour_nodes", _int, "an integer")
        if kw["contour_nodes"] < 16:
            raise ConfigError("run.contour_nodes: must be >= 16")
    if "delta_B" in run:
        kw["delta_B"] = _get(run, "delta_B", float, "a number")
        if not kw["delta_B"] > 0:
            raise ConfigError("run.delta_B: must be > 0")
    if "cache" in run:
        kw["cache"] = _get(run, "cache", _bool, "a boolean")
    if "precision_digits" in run:
        kw["precision_digits"] = _get(run, "precision_digits", _int, "an integer")
        if not 1 <= kw["precision_digits"] <= 17:
            raise ConfigError("run.precision_digits: must be in 1..17")
    if "workers" in run:
        kw["workers"] = _get(run, "workers", _int, "an integer")
        if kw["workers"] < 1:
            raise ConfigError("run.workers: must be >= 1")

    if cp.has_section("window"):
        w = cp["window"]
        lower = _get(w, "lower", _pair, "two numbers") if "lower" in w else None
        upper = _get(w, "upper", _pair, "two numbers") if "upper" in w else None
        if (lower is None) != (upper is None):
            raise ConfigError("window.lower and window.upper must be given together")
        if lower is not None and not all(a < b for a, b in zip(lower, upper)):
            raise ConfigError("window.upper: must exceed window.lower componentwise")
        buf = _get(w, "min_buffer", float, "a number") if "min_buffer" in w else None
        if buf is not None and buf < 0:
            raise ConfigError("window.min_buffer: must be >= 0")
        kw["window"] = WindowConfig(lower, upper, buf)

    if cp.has_section("sweep"):
        s = cp["sweep"]
        for key in _SWEEP_KEYS:
            if key not in s:
                raise ConfigError(f"sweep.{key}: missing")
        sw = SweepConfig(_get(s, "B_start", _fraction, "a number"),
                         _get(s, "B_end", _fraction, "a number"),
                         _get(s, "steps", _int, "an integer"))
        if sw.steps < 2:
            raise ConfigError("sweep.steps: must be >= 2")
        if not sw.B_start < sw.B_end:
            raise ConfigError("sweep.B_end: must exceed sweep.B_start")
        kw["sweep"] = sw
    elif verb == "sweep":
        raise ConfigError("[sweep] section missing")

    if cp.has_section("oracle"):
        o = cp["oracle"]
        okw = {}
        for key in ("instances", "max_dim", "seed", "contour_nodes", "kgrid"):
            if key in o:
                okw[key] = _get(o, key, _int, "an integer")
        if "fluxes" in o:
            okw["fluxes"] = tuple(p.strip() for p in o["fluxes"].split(",") if p.strip())
            for f in okw["fluxes"]:
                try:
                    Fraction(f)
                except ValueError as exc:
                    raise ConfigError(f"oracle.fluxes: cannot parse {f!r}") from exc
        oc = OracleConfig(**okw)
        if not 2 <= oc.max_dim <= 200:
            raise ConfigError("oracle.max_dim: must be in 2..200")
        if oc.instances < 1:
            raise ConfigError("oracle.instances: must be >= 1")
        if oc.kgrid < 6:
            raise ConfigError("oracle.kgrid: must be >= 6")
        if oc.contour_nodes < 16:
            raise ConfigError("oracle.contour_nodes: must be >= 16")
        kw["oracle"] = oc

    cfg = RunConfig(model=model, fermi_energy=fermi, output_dir=out, **kw)
    _check_output_dir(out)
    if model is not None and verb in ("run", "sweep"):
        _check_instances(cfg, verb)
    return cfg


def _check_output_dir(out: Path):
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"run.output_dir: cannot create {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"run.output_dir: {out} is not writable")


def _check_instances(cfg: RunConfig, verb: str):
    """Build every Hamiltonian and window once so validation errors surface before solving."""
    if verb == "run":
        if cfg.model.B1 != cfg.model.B2:
            raise ConfigError("model.B1: must equal model.B2 (the field enters both terms)")
        fields_B = [cfg.field_B]
    else:
        fields_B = list(cfg.sweep.grid())
    for B in fields_B:
        for b in (B - cfg.delta_B, B, B + cfg.delta_B):
            try:
                H = build_hamiltonian(cfg.model.with_field(b))
            except ModelError as exc:
                raise ConfigError(f"model (B={b:g}): {exc}") from exc
        try:
            cfg.window.build(H.geometry)
        except MarkerError as exc:
            raise ConfigError(f"window: {exc}") from exc


# ---------------------------------------------------------------- formatting

def _fmt(x, digits: int) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, f".{digits}g")


def _round(x, digits: int):
    """JSON-ready value: floats cut to ``digits`` significant digits, non-finite to None."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(format(float(x), f".{digits}g")) if math.isfinite(x) else None
    return x


# ---------------------------------------------------------------- run

def _setup_logging(out: Path, name: str = "run.log") -> logging.Handler:
    handler = logging.FileHandler(out / name, mode="a")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


def _analysis_row(cfg: RunConfig, B: float, cache):
    """One instance: (row dict for the CSV, report dict for JSON) or a PipelineError."""
    spec = cfg.model
    H = build_hamiltonian(spec.with_field(B))
    window = cfg.window.build(H.geometry)
    an = analyze(spec, B, cfg.fermi_energy, cfg.delta_B, window, cfg.contour_nodes, cache)
    report = {"E_F": cfg.fermi_energy, "gap_lower": an.gap.gap_lower,
              "gap_upper": an.gap.gap_upper, "rank_below": an.gap.rank_below,
              "gapped": not an.markers.gapless}
    report.update({k: getattr(an.markers, k) for k in MARKER_FIELDS})
    report.update(an.streda.to_dict())
    return report, an.timings


def run_single(config_path) -> int:
    cfg = load_config(config_path, "run")
    handler = _setup_logging(cfg.output_dir)
    try:
        cache = EigenCache(cfg.cache_dir) if cfg.cache else None
        log.info("run %s: B=%g E_F=%g", config_path, cfg.field_B, cfg.fermi_energy)
        t0 = time.perf_counter()
        report, timings = _analysis_row(cfg, cfg.field_B, cache)
        for k, v in timings.items():
            log.info("timing %s %.3fs", k, v)
        log.info("timing total %.3fs", time.perf_counter() - t0)
        d = cfg.precision_digits
        payload = {k: _round(v, d) for k, v in sorted(report.items())}
        tmp = cfg.output_dir / "report.json.tmp"
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        tmp.replace(cfg.output_dir / "report.json")
        return EXIT_OK
    finally:
        log.removeHandler(handler)
        handler.close()


def _sweep_point(args):
    cfg, B = args
    cache = EigenCache(cfg.cache_dir) if cfg.cache else None
    row = {c: math.nan for c in SWEEP_COLUMNS}
    row.update(B=B, E_F=cfg.fermi_energy, rank_below=-1, gapped_flag=0)
    try:
        report, timings = _analysis_row(cfg, B, cache)
    except PipelineError as exc:
        return row, f"B={B:.12g} not gapped ({exc})"
    for c in SWEEP_COLUMNS[:-1]:
        if c in report:
            row[c] = report[c]
    row["gapped_flag"] = int(report["gapped"])
    return row, " ".join(f"{k}={v:.2f}s" for k, v in timings.items())


def pool_size(cfg: RunConfig) -> int:
    env = os.environ.get("STREDALAB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"STREDALAB_THREADS: cannot parse {env!r}") from exc
        if n < 1:
            raise ConfigError("STREDALAB_THREADS: must be >= 1")
        return n
    return cfg.workers or os.cpu_count() or 1


def _write_row(fh, row: dict, digits: int):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(_fmt(row[c], digits) for c in SWEEP_COLUMNS)
    fh.write(buf.getvalue())   # one write per row, then force it to disk
    fh.flush()
    os.fsync(fh.fileno())


def run_sweep(config_path) -> int:
    cfg = load_config(config_path, "sweep")
    n_workers = pool_size(cfg)
    handler = _setup_logging(cfg.output_dir)
    path = cfg.output_dir / "sweep.csv"
    grid = [float(B) for B in cfg.sweep.grid()]
    log.info("sweep %s: %d points, %d workers", config_path, len(grid), n_workers)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(SWEEP_COLUMNS) + "\n")
            fh.flush()
            jobs = [(cfg, B) for B in grid]
            if n_workers == 1:
                results = map(_sweep_point, jobs)
                pool = None
            else:
                pool = ProcessPoolExecutor(max_workers=min(n_workers, len(jobs)))
                results = pool.map(_sweep_point, jobs)   # ordered
            try:
                for B, (row, note) in zip(grid, results):
                    log.info("B=%.12g %s", B, note)
                    _write_row(fh, row, cfg.precision_digits)
            finally:
                if pool is not None:
                    pool.shutdown(cancel_futures=True)
        return EXIT_OK
    finally:
        log.removeHandler(handler)
        handler.close()


# ---------------------------------------------------------------- oracle

ORACLE_TOL = {"liouvillian": 1e-6, "uniqueness": 1e-8, "double_commutator": 1e-6, "trace": 1e-8}


def run_oracle(config_path) -> int:
    cfg = load_config(config_path, "oracle")
    oc = cfg.oracle
    handler = _setup_logging(cfg.output_dir, "oracle.log")
    try:
        rng = np.random.default_rng(oc.seed)
        ids, ok = [], True
        for j in range(oc.instances):
            dim = int(rng.integers(2, oc.max_dim + 1))
            r = brute_force_identities(dim, oc.seed + j, nodes=oc.contour_nodes)
            res = {"dim": r.dim, "seed": r.seed, "liouvillian": r.liouvillian,
                   "uniqueness": r.uniqueness, "double_commutator": r.double_commutator,
                   "trace": r.trace}
            res["pass"] = all(res[k] <= (tol * r.dim if k == "trace" else tol)
                              for k, tol in ORACLE_TOL.items())
            ok &= res["pass"]
            log.info("identities dim=%d seed=%d worst=%.3g", r.dim, r.seed, r.worst())
            ids.append(res)
        fhs = []
        for f in oc.fluxes:
            flux = Fraction(f)
            p, q = flux.numerator, flux.denominator
            grid = BlochGrid.hofstadter(flux, (oc.kgrid, oc.kgrid))
            for r in range(1, q):
                if q % 2 == 0 and 2 * r == q:
                    continue      # central band touching of even q
                ch, resid, gap = fukui_hatsugai(grid, r)
                t = diophantine_t(p, q, r)
                fhs.append({"flux": f, "bands_filled": r, "chern": ch, "residual": resid,
                            "diophantine_t": t, "pass": ch == t and resid <= 1e-6})
                ok &= fhs[-1]["pass"]
                log.info("fhs flux=%s r=%d chern=%d t=%d", f, r, ch, t)
        d = cfg.precision_digits
        payload = {"identities": [{k: _round(v, d) for k, v in x.items()} for x in ids],
                   "fukui_hatsugai": [{k: _round(v, d) for k, v in x.items()} for x in fhs],
                   "pass": bool(ok)}
        (cfg.output_dir / "oracle.json").write_text(json.dumps(payload, indent=2) + "\n")
        if not ok:
            print("oracle: some checks failed, see oracle.json", file=sys.stderr)
            return EXIT_NUMERIC
        return EXIT_OK
    finally:
        log.removeHandler(handler)
        handler.close()


def cache_clear(directory) -> int:
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"cache-clear: {d} is not a directory")
    targets = [d] + ([d / "cache"] if (d / "cache").is_dir() else [])
    n = sum(EigenCache(t).clear() for t in targets)
    print(f"removed {n} cached spectra")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="stredalab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, helptext in (("run", "single instance: markers, Streda derivative, contour value"),
                           ("sweep", "B-sweep written to sweep.csv"),
                           ("oracle", "random-matrix identities and lattice Chern numbers")):
        p = sub.add_parser(verb, help=helptext)
        p.add_argument("config")
    p = sub.add_parser("cache-clear", help="remove cached spectra from a directory")
    p.add_argument("directory")
    args = ap.parse_args(argv)
    try:
        if args.verb == "run":
            return run_single(args.config)
        if args.verb == "sweep":
            return run_sweep(args.config)
        if args.verb == "oracle":
            return run_oracle(args.config)
        return cache_clear(args.directory)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"numerical failure in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SpectralError, OracleError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
