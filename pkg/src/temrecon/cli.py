"""Command-line front end.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .encoder import (EncoderConfig, EventTrain, SampleSet, calibrate_d, density, encode,
                      extract_samples, quantize)
from .errors import TemReconError
from .experiments import load_spec, parse_number, preset, run_experiment
from .kernels import IDEAL, HTable, LowpassKernel, build_table, gram_exact, lazar_cross_gram
from .pipeline import PipelineConfig, pipeline_run
from .recon import ReconVariant, Reconstructor, frame_bounds, run
from .shiftadd import DEFAULT_LAMBDA, ShiftAddConfig, run_multiplierless
from .signal import from_nyquist_samples, mse_bits, mse_db, random_signal

logger = logging.getLogger("temrecon")


class _UsageError(Exception):
    pass


def _kernel(args) -> LowpassKernel:
    if args.kernel == "ideal":
        return IDEAL
    return LowpassKernel("cosine_rolloff", args.r)


def _emit(args, name: str, rows: list[dict] | None = None, payload=None) -> Path:
    """Write ``rows`` (CSV or JSON per ``--format``) or a raw JSON payload."""
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if payload is not None or args.format == "json":
        p = out / f"{name}.json"
        p.write_text(json.dumps(rows if payload is None else payload, indent=1) + "\n")
    else:
        p = out / f"{name}.csv"
        buf = io.StringIO()
        if rows:
            w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        p.write_text(buf.getvalue())
    return p


def _load_signal(args):
    if args.signal:
        vals = []
        with open(args.signal) as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().lower() in ("x", "value", "sample"):
                    continue
                vals.append(float(row[-1]))
        return from_nyquist_samples(vals)
    return random_signal(args.period, args.amplitude, args.seed)


def _load_samples(args) -> SampleSet:
    if args.samples:
        return SampleSet.from_csv(Path(args.samples).read_text(), float(args.period))
    if args.events:
        e = EventTrain.from_csv(Path(args.events).read_text(), float(args.period))
        if args.quant_step:
            e = quantize(e, parse_number(args.quant_step))
        return extract_samples(e)
    raise _UsageError("give --events or --samples")


# ---------------------------------------------------------------- subcommands

def cmd_encode(args) -> int:
    x = _load_signal(args)
    if args.d is not None:
        d = args.d
    else:
        d = calibrate_d([x], args.density)
    q = parse_number(args.quant_step) if args.quant_step else 0.0
    e = encode(x, EncoderConfig(d=d, quant_step=q, close_period=not args.open))
    S = extract_samples(e)
    rows = [{"index": i, "tau": repr(float(t))} for i, t in enumerate(e.taus)]
    p = _emit(args, "events", rows)
    srows = [{"index": i, "t": repr(float(S.t[i])), "s": "" if i == 0 else repr(float(S.s[i - 1])),
              "T": "" if i == 0 else repr(float(S.T[i - 1]))} for i in range(S.N + 1)]
    _emit(args, "samples", srows)
    print(f"d={e.d!r} events={len(e)} intervals={S.N} density={density(S):.4f} "
          f"closed={S.closed} -> {p}")
    return 0


def cmd_reconstruct(args) -> int:
    S = _load_samples(args)
    kernel = _kernel(args)
    v = args.variant
    if v == "pipeline":
        table = HTable.load(args.table) if args.table else None
        res = pipeline_run(S, PipelineConfig(args.L, args.iterations, args.lam,
                                             table.kernel if table else kernel, table))
        c, r = res.c, res.r
        kernel = table.kernel if table else kernel
        lazar = False
        print(json.dumps(res.adder_report, sort_keys=True))
    elif v == "multiplierless":
        G = gram_exact(S, kernel, S.period)
        out = run_multiplierless(S, G, ShiftAddConfig.from_samples(S, args.lam), args.iterations)
        c, r, lazar = out.c, out.r, False
    else:
        rv = ReconVariant.parse(v)
        lazar = rv.kind == "lazar"
        G = lazar_cross_gram(S) if lazar else gram_exact(S, kernel, S.period)
        out = run(S, G, rv, args.iterations)
        c, r = out.state.c, out.state.r
    recon = Reconstructor(S, kernel, lazar=lazar)
    sig = recon.signal(c)
    P = int(round(S.period))
    _emit(args, "coefficients", [{"i": i, "c": repr(float(ci))} for i, ci in enumerate(c)])
    tt = np.arange(P, dtype=float) + S.t[0]
    _emit(args, "signal", [{"t": repr(float(a)), "x": repr(float(b))} for a, b in zip(tt, sig(tt))])
    msg = f"variant={v} iterations={args.iterations} residual_rms={np.sqrt(np.mean(r * r)):.3e}"
    if args.reference_seed is not None:
        x = random_signal(P, args.amplitude, args.reference_seed)
        e = mse_db(recon.mse(c, x))
        msg += f" mse_db={e:.3f} bits={float(mse_bits(e, args.amplitude)):.3f}"
    print(msg)
    return 0


def cmd_table(args) -> int:
    if args.inspect:
        t = HTable.load(args.inspect)
        info = {"kind": t.kernel.kind, "r": t.kernel.rolloff_r, "step": t.step,
                "max_lag": t.max_lag, "entries": int(t.values.size),
                "diag_entries": int(t.diag_values.size), "alpha": t.alpha, "beta": t.beta,
                "bytes": t.nbytes}
        print(json.dumps(info, indent=1))
        return 0
    kernel = _kernel(args)
    step = parse_number(args.step)
    t = build_table(kernel, step, parse_number(args.max_lag), parse_number(args.max_T))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / args.output
    size = t.save(path)
    print(f"wrote {path}: {t.values.size} hbar + {t.diag_values.size} diagonal entries, "
          f"{size} bytes ({size / 1024:.1f} KiB; {'under' if size < 100_000 else 'over'} 100 KB)")
    return 0


def cmd_experiment(args) -> int:
    if args.spec:
        spec = load_spec(args.spec)
    elif args.preset:
        spec = preset(args.preset, seed_base=args.seed)
    else:
        raise _UsageError("give --spec or --preset")
    if args.trials is not None:
        spec = dataclasses.replace(spec, trials=args.trials)
    res = run_experiment(spec, threads=args.threads)
    paths = res.write(args.out_dir, args.format)
    for label, tr in res.traces.items():
        if tr.mse.size:
            print(f"{label}: {tr.bits[-1]:.2f} bits after {tr.mse.size - 1} iterations "
                  f"(peak {tr.bits.max():.2f} at {int(np.argmax(tr.bits))})")
    print(f"{len(paths)} files in {args.out_dir}")
    return 0


def cmd_analyze(args) -> int:
    from .spectral import eigendecompose_M, semiconvergence_predict

    S = _load_samples(args)
    G = gram_exact(S, IDEAL, S.period)
    spec = eigendecompose_M(G, S)
    eta = np.random.default_rng(args.seed).normal(0.0, args.sigma, S.N)
    pred = semiconvergence_predict(spec, S.s, eta, args.iterations, samples=S)
    rows = [{"i": i, "mu_i": repr(float(spec.mu[i])), "e0_i": repr(float(pred.e0[i])),
             "einf_i": repr(float(pred.einf[i]))} for i in range(spec.rank)]
    _emit(args, "spectrum", rows)
    fb = frame_bounds(G, S, eigh=lambda H: (spec.nu_all, None))
    summary = {"N": S.N, "rank": spec.rank, "A": fb.A, "B": fb.B,
               "max_abs_mu": float(np.max(np.abs(spec.mu))),
               "fraction_mu_above_0.17": float(np.mean(spec.mu > 0.17)),
               "sigma": args.sigma, "n": args.iterations,
               "predicted_error_energy": pred.energy}
    _emit(args, "spectrum_summary", payload=summary)
    print(json.dumps(summary, indent=1))
    return 0


def cmd_twoperiodic(args) -> int:
    from .spectral import delta0, two_periodic_detF, two_periodic_Mnorm

    if args.delta:
        deltas = [parse_number(d) for d in args.delta]
    else:
        deltas = list(np.round(np.arange(0.0, 0.5, 0.01), 10))
    w = np.linspace(0.0, np.pi, args.grid)
    d0 = delta0()
    rows = []
    for dl in deltas:
        h = two_periodic_Mnorm(dl)
        det = np.abs(two_periodic_detF(dl, w)) if dl < 0.5 else np.zeros(1)
        rows.append({"delta": dl, "h": repr(float(h)), "min_abs_detF": repr(float(det.min())),
                     "bound": repr(float(16 * np.cos(dl * np.pi) / np.pi ** 2)),
                     "T_m": repr(1.0 + 2.0 * dl), "lazar_nonexpansive": bool(h <= 1.0)})
    _emit(args, "twoperiodic", rows)
    for row in rows:
        print(f"delta={row['delta']:.4f} h={float(row['h']):.6f} "
              f"min|detF|={float(row['min_abs_detF']):.6f}")
    print(f"delta0={d0:.6f} lazar threshold T_m={1 + 2 * d0:.6f}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    def global_flags(q, suppress):
        dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        q.add_argument("--seed", type=int, default=dflt(0), help="random seed (default 0)")
        q.add_argument("--threads", type=int, default=dflt(1),
                       help="worker processes for experiments")
        q.add_argument("--out-dir", default=dflt("."), help="directory for output files")
        q.add_argument("--format", choices=("csv", "json"), default=dflt("csv"))
        q.add_argument("-v", "--verbose", action="count", default=dflt(0))

    p = argparse.ArgumentParser(prog="temrecon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    global_flags(p, suppress=False)
    # the same flags are accepted after the subcommand name
    shared = argparse.ArgumentParser(add_help=False)
    global_flags(shared, suppress=True)
    sub = p.add_subparsers(dest="command", required=True)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add(*a, parents=[shared], **kw)

    def common_signal(q):
        q.add_argument("--period", type=int, default=257)
        q.add_argument("--amplitude", type=float, default=0.5)

    def common_samples(q):
        q.add_argument("--events", help="events CSV (index,tau)")
        q.add_argument("--samples", help="samples CSV (index,t,s,T)")
        q.add_argument("--quant-step", help="quantize event times first, e.g. 2^-12")

    q = sub.add_parser("encode", help="encode a signal into switching instants")
    common_signal(q)
    q.add_argument("--signal", help="CSV of Nyquist-rate samples (default: random by --seed)")
    g = q.add_mutually_exclusive_group()
    g.add_argument("--d", type=float, help="Schmitt-trigger threshold")
    g.add_argument("--density", type=float, default=1.5, help="target density of t_i")
    q.add_argument("--quant-step", help="time quantization step, e.g. 2^-12")
    q.add_argument("--open", action="store_true", help="do not close the period")
    q.set_defaults(func=cmd_encode)

    q = sub.add_parser("reconstruct", help="iterative reconstruction from events")
    common_signal(q)
    common_samples(q)
    q.add_argument("--variant", default="pocs",
                   help="lazar | pocs | pocs_relaxed(LAM) | multiplierless | pipeline")
    q.add_argument("--iterations", type=int, default=20)
    q.add_argument("--kernel", choices=("ideal", "cosine"), default="ideal")
    q.add_argument("--r", type=float, default=1.4)
    q.add_argument("--L", type=int, default=17)
    q.add_argument("--lam", type=float, default=DEFAULT_LAMBDA)
    q.add_argument("--table", help="HTable file for the pipeline")
    q.add_argument("--reference-seed", type=int, help="report MSE against random_signal(seed)")
    q.set_defaults(func=cmd_reconstruct)

    q = sub.add_parser("table", help="build or inspect an hbar lookup table")
    q.add_argument("--kernel", choices=("ideal", "cosine"), default="cosine")
    q.add_argument("--r", type=float, default=1.4)
    q.add_argument("--step", default="2^-12")
    q.add_argument("--max-lag", default="20")
    q.add_argument("--max-T", default="1.25")
    q.add_argument("--output", default="htable.bin")
    q.add_argument("--inspect", help="print the header of an existing table file")
    q.set_defaults(func=cmd_table)

    q = sub.add_parser("experiment", help="run an ensemble experiment")
    q.add_argument("--spec", help="INI file with an [experiment] section")
    q.add_argument("--preset", choices=("fig2-desk", "fig3-desk", "fig5-desk"))
    q.add_argument("--trials", type=int)
    q.set_defaults(func=cmd_experiment)

    q = sub.add_parser("analyze", help="spectrum of M and semi-convergence prediction")
    common_signal(q)
    common_samples(q)
    q.add_argument("--sigma", type=float, default=1e-3, help="Gaussian data-noise std")
    q.add_argument("--iterations", type=int, default=20)
    q.set_defaults(func=cmd_analyze)

    q = sub.add_parser("twoperiodic", help="2-periodic grid diagnostics")
    q.add_argument("--delta", nargs="*", help="delta values (default: 0 to 0.49 step 0.01)")
    q.add_argument("--grid", type=int, default=1000, help="omega grid size")
    q.set_defaults(func=cmd_twoperiodic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"temrecon: error: {exc}", file=sys.stderr)
        return 2
    except (TemReconError, OSError) as exc:
        print(f"temrecon: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
