"""Command-line interface: ``riskratio <command> ...``.

Input files are delimited text with a header naming the columns ``scenario``
(factual / counterfactual), ``member``, ``value`` and optionally ``year``.
Exit codes: 0 success, 2 bad input, 3 not computable, 4 convergence failure,
5 infeasible size.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import bootstrap as boot
from . import eva
from . import internal_variability as iv
from . import ratio_intervals as ri
from . import simstudy
from . import wang_shan as ws
from .core import (UNDEFINED, ConvergenceError, EventDefinition, InfeasibleSizeError,
                   InsufficientExceedancesError, NotComputableError, RawSample, RiskRatioError,
                   ScenarioPair, Side, Tail, DegenerateSampleError)

EXIT_OK, EXIT_PARSE, EXIT_NOT_COMPUTABLE, EXIT_CONVERGENCE, EXIT_INFEASIBLE = 0, 2, 3, 4, 5
SCENARIOS = ("factual", "counterfactual")
COUNT_METHODS = ri.METHODS + boot.METHODS


class InputError(ValueError):
    """Malformed input file or arguments."""


@dataclass(frozen=True)
class IngestRecord:
    scenario: str
    year: int | None
    member: int
    value: float


# -- ingestion -------------------------------------------------------------------

def _dialect(text: str) -> str:
    first = text.split("\n", 1)[0]
    return "\t" if "\t" in first else ","


def parse_records(text: str, source: str = "<input>") -> list[IngestRecord]:
    reader = csv.DictReader(io.StringIO(text), delimiter=_dialect(text))
    cols = set(reader.fieldnames or ())
    missing = {"scenario", "member", "value"} - cols
    if missing:
        raise InputError(f"{source}: missing column(s) {', '.join(sorted(missing))}")
    has_year = "year" in cols
    records, seen = [], set()
    for line, row in enumerate(reader, start=2):
        try:
            scen = row["scenario"].strip().lower()
            if scen not in SCENARIOS:
                raise ValueError(f"scenario must be factual or counterfactual, got {scen!r}")
            year = int(row["year"]) if has_year and row["year"].strip() else None
            rec = IngestRecord(scen, year, int(row["member"]), float(row["value"]))
        except (ValueError, TypeError, AttributeError) as exc:
            raise InputError(f"{source}:{line}: {exc}") from None
        if not math.isfinite(rec.value):
            raise InputError(f"{source}:{line}: value must be finite")
        key = (rec.scenario, rec.year, rec.member)
        if key in seen:
            raise InputError(f"{source}:{line}: duplicate record {key}")
        seen.add(key)
        records.append(rec)
    if not records:
        raise InputError(f"{source}: no records")
    return records


def read_records(path: str | Path) -> list[IngestRecord]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(str(exc)) from None
    return parse_records(text, str(path))


def format_records(records) -> str:
    records = list(records)
    has_year = any(r.year is not None for r in records)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("scenario", "year", "member", "value") if has_year
               else ("scenario", "member", "value"))
    for r in records:
        row = (r.scenario, "" if r.year is None else r.year, r.member, repr(r.value))
        w.writerow(row if has_year else (row[0],) + row[2:])
    return buf.getvalue()


def apply_anomaly(records, reference, mode: str) -> list[IngestRecord]:
    """Subtract (or divide by) the mean of the reference-period values."""
    ref = np.array([r.value for r in reference])
    centre = float(ref.mean())
    if mode == "divide":
        if centre == 0.0:
            raise InputError("reference mean is zero; cannot divide")
        return [IngestRecord(r.scenario, r.year, r.member, r.value / centre) for r in records]
    return [IngestRecord(r.scenario, r.year, r.member, r.value - centre) for r in records]


def _values(records, scenario) -> np.ndarray:
    rows = sorted((r.year if r.year is not None else -math.inf, r.member, r.value)
                  for r in records if r.scenario == scenario)
    if not rows:
        raise InputError(f"no {scenario} records")
    return np.array([v for *_, v in rows])


def raw_pair(records) -> ScenarioPair:
    return ScenarioPair(RawSample(_values(records, "factual")),
                        RawSample(_values(records, "counterfactual")))


def ensemble_series(records, scenario) -> iv.EnsembleSeries:
    by_year = defaultdict(dict)
    for r in records:
        if r.scenario != scenario:
            continue
        if r.year is None:
            raise InputError("time averaging needs a year column")
        by_year[r.year][r.member] = r.value
    if not by_year:
        raise InputError(f"no {scenario} records")
    sizes = {len(m) for m in by_year.values()}
    if len(sizes) != 1:
        raise InputError(f"{scenario}: every year needs the same number of members")
    years = sorted(by_year)
    values = [[by_year[y][m] for m in sorted(by_year[y])] for y in years]
    return iv.EnsembleSeries(years, sizes.pop(), values=values)


def parse_counts(text: str) -> ScenarioPair:
    try:
        yf, nf, yc, nc = (int(x) for x in text.split(","))
        return ScenarioPair.from_counts(yf, nf, yc, nc)
    except ValueError as exc:
        raise InputError(f"--counts expects yF,nF,yC,nC with 0 <= y <= n: {exc}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


# -- rendering -------------------------------------------------------------------

def fmt_num(x) -> str:
    if x is UNDEFINED:
        return "undefined"
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6g}"


def _csv_num(x) -> str:
    return "undefined" if x is UNDEFINED else repr(float(x))


def _json_ext(name, x) -> dict:
    """Extended reals as value plus explicit flags, never a float sentinel."""
    if x is UNDEFINED:
        return {name: None, f"{name}_infinite": False, f"{name}_undefined": True}
    x = float(x)
    if math.isinf(x):
        return {name: None, f"{name}_infinite": True, f"{name}_undefined": False}
    return {name: x, f"{name}_infinite": False, f"{name}_undefined": False}


def interval_record(iv_, **extra) -> dict:
    rec = {"method": iv_.method, "level": iv_.level, "side": iv_.side.value}
    rec.update(_json_ext("estimate", iv_.estimate))
    rec.update(_json_ext("lower", iv_.lower))
    rec.update(_json_ext("upper", iv_.upper))
    rec["diagnostics"] = dict(iv_.diagnostics)
    rec.update(extra)
    return rec


def interval_text(iv_) -> list[str]:
    lines = [f"method: {iv_.method}", f"level: {iv_.level:g}", f"side: {iv_.side.value}",
             f"estimate: {fmt_num(iv_.estimate)}", f"lower: {fmt_num(iv_.lower)}",
             f"upper: {fmt_num(iv_.upper)}"]
    lines += [f"{k}: {fmt_num(v)}" for k, v in iv_.diagnostics.items()]
    return lines


def _emit(args, record: dict, lines: list[str]) -> None:
    if args.format == "json":
        print(json.dumps(record, indent=2, sort_keys=True))
    else:
        print("\n".join(lines))


def _write_out(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


# -- commands ----------------------------------------------------------------------

def _load(args) -> list[IngestRecord]:
    records = read_records(args.input)
    if args.anomaly:
        if not args.reference:
            raise InputError("--anomaly needs --reference")
        records = apply_anomaly(records, read_records(args.reference), args.anomaly)
    elif args.reference:
        raise InputError("--reference is only used with --anomaly")
    return records


def _count_interval(pair: ScenarioPair, method, level, side, args, event=None):
    if method in boot.METHODS:
        cfg = boot.BootstrapConfig(args.nb, args.seed, args.policy)
        return boot.bootstrap_interval(pair, method, level, side, cfg, event)
    counts = pair.to_counts(event)
    fn = getattr(ri, f"{method.replace('-', '_')}_interval")
    return fn(counts, level, side)


def cmd_rr_ci(args) -> int:
    if args.counts:
        if args.input:
            raise InputError("give either an input file or --counts, not both")
        pair, event = parse_counts(args.counts), None
    else:
        if not args.input or args.cutoff is None:
            raise InputError("rr-ci needs an input file with --cutoff, or --counts")
        pair, event = raw_pair(_load(args)), EventDefinition(args.cutoff, args.tail)
    yf, nf, yc, nc = pair.to_counts(event).counts()
    res = _count_interval(pair, args.method, args.level, args.side, args, event)
    _emit(args, interval_record(res, counts={"yF": yf, "nF": nf, "yC": yc, "nC": nc}),
          interval_text(res) + [f"counts: {yf}/{nf} {yc}/{nc}"])
    return EXIT_OK


SWEEP_COLUMNS = ("cutoff", "method", "level", "side", "yF", "nF", "yC", "nC",
                 "estimate", "lower", "upper", "status")


def cmd_sweep(args) -> int:
    pair = raw_pair(_load(args))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    side = Side.parse(args.side)
    for cutoff in args.cutoffs:
        event = EventDefinition(cutoff, args.tail)
        yf, nf, yc, nc = pair.to_counts(event).counts()
        row = [repr(cutoff), args.method, repr(args.level), side.value, yf, nf, yc, nc]
        try:
            res = _count_interval(pair, args.method, args.level, side, args, event)
        except NotComputableError as exc:
            row += ["", "", "", f"not_computable: {exc}"]
        else:
            row += [_csv_num(res.estimate), repr(res.lower), repr(res.upper), "ok"]
        w.writerow(row)
    _write_out(args.out, buf.getvalue())
    return EXIT_OK


def _fit_record(fit: eva.PotFit) -> dict:
    p = fit.params
    return {"mu": p.mu, "sigma": p.sigma, "xi": p.xi, "threshold": fit.threshold,
            "n_blocks": fit.n_blocks, "n_exceedances": fit.n_exceedances,
            "log_likelihood": fit.log_likelihood, "converged": fit.converged}


DEFAULT_THRESHOLD_QUANTILE = {Tail.UPPER: 0.9, Tail.LOWER: 0.2}


def _threshold(values, q, tail) -> float:
    """Threshold at quantile ``q`` of the raw values (default depends on the tail)."""
    if q is None:
        q = DEFAULT_THRESHOLD_QUANTILE[Tail(tail)]
    if not 0.0 < q < 1.0:
        raise InputError("--threshold-quantile must lie in (0, 1)")
    return float(np.quantile(values, q))


def cmd_fit_eva(args) -> int:
    if args.method in boot.METHODS:
        raise InputError("bootstrap intervals are not available with EVA fits; "
                         "use --method lrt (profile likelihood) instead")
    pair = raw_pair(_load(args))
    event = EventDefinition(args.cutoff, args.tail)
    samples = (pair.factual, pair.counterfactual)
    thresholds = tuple(_threshold(s.values, args.threshold_quantile, args.tail) for s in samples)
    blocks = tuple(args.n_blocks or len(s) for s in samples)
    record, lines = {"fits": {}}, []
    fits = {}
    for name, s, u, b in zip(SCENARIOS, samples, thresholds, blocks):
        try:
            fits[name] = eva.fit_pot(s, u, b, args.tail)
        except InsufficientExceedancesError as exc:
            lines.append(f"{name}: no fit ({exc})")
            record["fits"][name] = None
            continue
        f = fits[name]
        record["fits"][name] = _fit_record(f)
        lines.append(f"{name}: mu={fmt_num(f.params.mu)} sigma={fmt_num(f.params.sigma)} "
                     f"xi={fmt_num(f.params.xi)} u={fmt_num(f.threshold)} "
                     f"exceedances={f.n_exceedances} converged={f.converged}")
    if args.method == "delta":
        if len(fits) < 2:
            raise NotComputableError("eva delta interval needs both fits")
        res = eva.eva_delta_interval(fits["factual"], fits["counterfactual"], event,
                                     args.level, args.side)
    else:
        res = eva.eva_lrt_interval(pair.factual, pair.counterfactual, event, thresholds,
                                   args.level, args.side, blocks)
    record["interval"] = interval_record(res)
    _emit(args, record, lines + interval_text(res))
    return EXIT_OK


def cmd_time_average(args) -> int:
    records = _load(args)
    f, c = ensemble_series(records, "factual"), ensemble_series(records, "counterfactual")
    event = EventDefinition(args.cutoff, args.tail)
    pf, pc = iv.time_averaged_p(f, event).value, iv.time_averaged_p(c, event).value
    record = {"pF": pf, "pC": pc, "n_years": f.n_years}
    lines = [f"pF: {fmt_num(pf)}", f"pC: {fmt_num(pc)}", f"years: {f.n_years}"]
    for label, compute in (
            ("delta", lambda: iv.time_averaged_delta_interval(f, c, event, args.level, args.side)),
            ("bootstrap", lambda: boot.INTERVALS[args.boot_method](
                iv.year_block_bootstrap(f, c, event,
                                        boot.BootstrapConfig(args.nb, args.seed, args.policy)),
                args.level, args.side))):
        try:
            res = compute()
        except NotComputableError as exc:
            record[label] = None
            lines.append(f"{label}: not computable ({exc})")
            continue
        record[label] = interval_record(res)
        lines.append(f"{label}: {res.method} estimate={fmt_num(res.estimate)} "
                     f"lower={fmt_num(res.lower)} upper={fmt_num(res.upper)}")
    per_year = []
    for year, res in iv.per_year_intervals(f, c, event, args.per_year_method, args.level, args.side):
        if res is None:
            per_year.append({"year": year, "interval": None})
            lines.append(f"year {year}: not computable")
        else:
            per_year.append({"year": year, "interval": interval_record(res)})
            lines.append(f"year {year}: estimate={fmt_num(res.estimate)} "
                         f"lower={fmt_num(res.lower)} upper={fmt_num(res.upper)}")
    record["per_year"] = per_year
    _emit(args, record, lines)
    return EXIT_OK


def cmd_simulate(args) -> int:
    reps = 5000 if args.full else args.reps
    grid = simstudy.ScenarioGrid(args.n, args.rr, args.pf, reps, args.level, args.seed)

    def progress(n, rr, pf, secs):
        logging.getLogger("riskratio").info("cell n=%d rr=%g pF=%g done in %.2fs", n, rr, pf, secs)

    metrics = simstudy.run_grid(grid, args.methods, n_b=args.nb, policy=args.policy,
                                progress=progress)
    _write_out(args.out, simstudy.emit_figures(metrics))
    return EXIT_OK


def cmd_build_ws_table(args) -> int:
    table = ws.build_table(args.nf, args.nc, args.level, args.grid_size)
    out = args.out or os.environ.get(ws.TABLE_DIR_ENV) or "."
    print(table.save(out))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _common(p, seed=True):
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--side", default="two_sided",
                   choices=("two_sided", "lower", "upper", "two-sided"))
    p.add_argument("--tail", default="upper", choices=("upper", "lower"))
    p.add_argument("--format", default="text", choices=("text", "json"))
    if seed:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--nb", type=int, default=10_000, help="bootstrap replicates")
        p.add_argument("--policy", default="drop_and_flag", choices=("drop_and_flag", "error"),
                       help="handling of bootstrap replicates with zero counts")


def _input(p, required=True):
    p.add_argument("input", nargs=None if required else "?")
    p.add_argument("--anomaly", choices=("subtract", "divide"),
                   help="express values relative to the mean of --reference")
    p.add_argument("--reference", help="reference-period file for --anomaly")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="riskratio", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rr-ci", help="risk ratio and interval for one event")
    _input(p, required=False)
    p.add_argument("--counts", help="yF,nF,yC,nC instead of an input file")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--method", default="koopman", choices=COUNT_METHODS)
    _common(p)
    p.set_defaults(func=cmd_rr_ci)

    p = sub.add_parser("sweep", help="intervals over a list of cutoffs (CSV)")
    _input(p)
    p.add_argument("--cutoffs", type=_float_list, required=True)
    p.add_argument("--method", default="koopman", choices=COUNT_METHODS)
    p.add_argument("--out", help="output file (default stdout)")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit-eva", help="point-process fits and EVA interval")
    _input(p)
    p.add_argument("--cutoff", type=float, required=True)
    p.add_argument("--threshold-quantile", type=float,
                   help="quantile of the values used as threshold (default 0.9 upper, 0.2 lower)")
    p.add_argument("--n-blocks", type=float, help="blocks per scenario (default: sample size)")
    p.add_argument("--method", default="lrt", choices=("lrt", "delta") + boot.METHODS)
    _common(p, seed=False)
    p.set_defaults(func=cmd_fit_eva)

    p = sub.add_parser("time-average", help="pooled and per-year results over years")
    _input(p)
    p.add_argument("--cutoff", type=float, required=True)
    p.add_argument("--boot-method", default="boot-percentile", choices=boot.METHODS)
    p.add_argument("--per-year-method", default="koopman", choices=ri.METHODS)
    _common(p)
    p.set_defaults(func=cmd_time_average)

    p = sub.add_parser("simulate", help="coverage study; writes long-format CSV")
    p.add_argument("--n", type=_int_list, default=list(simstudy.DEFAULT_N))
    p.add_argument("--rr", type=_float_list, default=list(simstudy.DEFAULT_RR))
    p.add_argument("--pf", type=_float_list, default=list(simstudy.DEFAULT_PF))
    p.add_argument("--methods", type=_str_list, default=list(simstudy.CLOSED_FORM))
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--full", action="store_true", help="use 5000 replications")
    p.add_argument("--level", type=float, default=0.95, help="one-sided level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nb", type=int, default=1000)
    p.add_argument("--policy", type=_str_list, default=["drop_and_flag"],
                   help="comma-separated bootstrap policies (drop_and_flag, error)")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build-ws-table", help="compute and store a Wang-Shan table")
    p.add_argument("--nf", type=int, required=True)
    p.add_argument("--nc", type=int, required=True)
    p.add_argument("--level", type=float, default=0.95, help="one-sided level")
    p.add_argument("--grid-size", type=int, default=ws.DEFAULT_GRID_SIZE)
    p.add_argument("--out", help=f"file or directory (default ${ws.TABLE_DIR_ENV} or .)")
    p.set_defaults(func=cmd_build_ws_table)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        code = _exit_code(exc)
        if code is None:
            raise
        print(f"riskratio: error: {exc}", file=sys.stderr)
        return code


def _exit_code(exc: Exception) -> int | None:
    # order matters: the specific library errors before the generic ValueError
    for types, code in (
            (InfeasibleSizeError, EXIT_INFEASIBLE),
            (ConvergenceError, EXIT_CONVERGENCE),
            ((NotComputableError, InsufficientExceedancesError, DegenerateSampleError),
             EXIT_NOT_COMPUTABLE),
            ((InputError, ValueError, RiskRatioError), EXIT_PARSE)):
        if isinstance(exc, types):
            return code
    return None

if __name__ == "__main__":
    sys.exit(main())
