"""Command-line interface: ``tensorgp simulate | fit | predict | diagnose``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
The default output root is ``$TENSORGP_OUTPUT_ROOT`` (else ``./runs``).
"""
import argparse
import csv
import json
import logging
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__, kernels
from .data import Manifest, SyntheticSpec, load_test_slice, load_training, make_benchmark
from .diagnostics import (
    kde_marginal,
    sigma3_samples,
    stationarity_check,
    summarize,
    symmetry_report,
)
from .exceptions import (
    ConfigurationError,
    DataFormatError,
    DomainError,
    FactorizationError,
    InitializationError,
    InsufficientDataError,
)
from .model import CovParams, PosteriorSpec, PriorBounds, sample_posterior
from .tmcmc import TmcmcConfig

log = logging.getLogger("tensorgp")

RUN_SCHEMA = "tensorgp.run/1"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _default_out(command):
    return Path(os.environ.get("TENSORGP_OUTPUT_ROOT", "runs")) / command


def build_parser():
    parser = _Parser(prog="tensorgp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="write a synthetic benchmark")
    sim.add_argument("--shape", type=_ints, default=(16, 5, 2), help="n,m2,2")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", type=Path)
    sim.add_argument("--q1", type=_floats, default=(15.0, 25.0))
    sim.add_argument("--q2", type=_floats, default=(0.05, 0.08))
    sim.add_argument("--a3", type=_floats, default=(1.0, 0.0, 0.4, 0.8), help="a11,a12,a21,a22")
    sim.add_argument("--s-test", type=_floats)
    sim.add_argument("--design-box", type=_floats, default=(0.0, 1.0), help="lower,upper for every coordinate")
    sim.add_argument("--star-box", type=_floats, default=(0.0, 10.0), help="lower,upper for both components")
    sim.add_argument("--misspecified", action="store_true", help="exponential instead of SQE kernel for mode 1")
    sim.add_argument("--no-test", action="store_true", help="do not emit a held-out test slice")

    for name, help_text in (("fit", "sample the covariance posterior"),
                            ("predict", "sample the joint posterior including the test design point")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--manifest", type=Path, required=True)
        p.add_argument("--out", type=Path)
        p.add_argument("--iterations", type=int, default=20000)
        p.add_argument("--burn-in", type=int, default=5000)
        p.add_argument("--thinning", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--chains", type=int, default=1)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--forward-prob", type=float, default=0.5)
        p.add_argument("--pilot-iterations", type=int, default=500)
        p.add_argument("--shared-innovation", action="store_true")
        p.add_argument("--no-optimize", action="store_true", help="skip the Nelder-Mead start refinement")
        p.add_argument("--q-max", type=float, default=1e6)
        p.add_argument("--jitter", type=float, default=1e-8)
        p.add_argument("--grid-size", type=int, default=256)
        if name == "predict":
            p.add_argument("--s-box-pad", type=float, default=0.0,
                           help="widen the design bounding box by this fraction of its width on each side")

    diag = sub.add_parser("diagnose", help="stationarity and symmetry reports for a stored run")
    diag.add_argument("--run", type=Path, required=True)
    diag.add_argument("--window-fraction", type=float, default=0.25)
    diag.add_argument("--p-threshold", type=float, default=0.01)
    diag.add_argument("--seed", type=int, default=0, help="seed for the factor-rotation randomization")
    diag.add_argument("--no-rotate", action="store_true", help="skip the factor-rotation randomization")
    return parser


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def cmd_simulate(args):
    shape = tuple(args.shape)
    if len(shape) != 3 or shape[2] != 2:
        raise UsageError("--shape must be n,m2,2")
    d = len(args.q1)
    if len(args.a3) != 4:
        raise UsageError("--a3 needs four entries")
    if len(args.design_box) != 2 or len(args.star_box) != 2:
        raise UsageError("boxes are given as lower,upper")
    params = CovParams(args.q1, args.q2, np.reshape(args.a3, (2, 2)))
    spec = SyntheticSpec(
        shape=shape,
        params=params,
        design_box=((args.design_box[0],) * d, (args.design_box[1],) * d),
        star_box=((args.star_box[0],) * 2, (args.star_box[1],) * 2),
        s_test=args.s_test,
        seed=args.seed,
        misspecified=args.misspecified,
        with_test=not args.no_test,
    )
    out = args.out or _default_out("simulate")
    manifest_path, truth = make_benchmark(spec, out)
    manifest = Manifest.read(manifest_path)
    for name, digest in sorted(manifest.digests.items()):
        print(f"{name}  {digest}")
    print(f"manifest: {manifest_path}")
    return EXIT_OK


def _fit_one_chain(job):
    spec, cfg, index, optimize, pilot_iterations = job
    return sample_posterior(spec, cfg, index, optimize, pilot_iterations)


def _run_sampling(args, prediction):
    if args.iterations <= args.burn_in:
        raise UsageError(f"--iterations ({args.iterations}) must exceed --burn-in ({args.burn_in})")
    if args.chains < 1 or args.thinning < 1 or args.pilot_iterations < 1:
        raise UsageError("--chains, --thinning and --pilot-iterations must be positive")
    if not 0 < args.forward_prob < 1:
        raise UsageError("--forward-prob must lie in (0, 1)")
    manifest = Manifest.read(args.manifest)
    training = load_training(manifest)
    test = None
    bounds = PriorBounds(q_max=args.q_max)
    if prediction:
        test = load_test_slice(manifest)
        if test is None:
            raise ConfigurationError("predict needs a manifest with test_path")
        lo, hi = training.design.min(axis=0), training.design.max(axis=0)
        pad = args.s_box_pad * (hi - lo)
        bounds = PriorBounds(q_max=args.q_max, s_box=(tuple(lo - pad), tuple(hi + pad)))
    spec = PosteriorSpec(training, test, jitter=args.jitter, bounds=bounds)
    k = spec.n_params
    cfg = TmcmcConfig(
        betas=(1.0,) * k,
        forward_probs=(args.forward_prob,) * k,
        iterations=args.iterations,
        burn_in=args.burn_in,
        seed=args.seed,
        thinning=args.thinning,
        shared_innovation=args.shared_innovation,
    )
    cfg.validate(k)

    out = args.out or _default_out(args.command)
    out.mkdir(parents=True, exist_ok=True)
    config = {k_: v for k_, v in vars(args).items() if k_ != "func"}
    _write_json(out / "config.json", {
        "schema": RUN_SCHEMA,
        "version": __version__,
        "backend": kernels.BACKEND,
        "args": config,
        "seed": args.seed,
        "manifest": str(args.manifest),
        "input_digest": training.digest,
        "manifest_digests": manifest.digests,
        "names": spec.names,
    })

    jobs = [(spec, cfg, i, not args.no_optimize, args.pilot_iterations) for i in range(args.chains)]
    log.info("running %d chain(s) of %d iterations over %d parameters", args.chains, args.iterations, k)
    if args.workers > 1 and args.chains > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_fit_one_chain, jobs))
    else:
        results = [_fit_one_chain(job) for job in jobs]

    names = spec.names
    for i, (chain, _) in enumerate(results):
        with open(out / f"chain_{i}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration"] + names + ["log_posterior", "accepted"])
            for rec in chain:
                w.writerow([rec.iteration] + [repr(float(v)) for v in rec.params]
                           + [repr(rec.log_posterior), int(rec.accepted)])
        with open(out / f"trace_{i}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "log_posterior"])
            for it, lp in enumerate(chain.trace, start=1):
                w.writerow([it, repr(float(lp))])

    pooled = np.vstack([c.samples for c, _ in results])
    marg_dir = out / "marginals"
    marg_dir.mkdir(exist_ok=True)
    if pooled.shape[0] >= 30:
        for j, name in enumerate(names):
            m = kde_marginal(pooled[:, j], grid_size=args.grid_size, name=name)
            np.savetxt(marg_dir / f"{name}.csv", np.column_stack([m.grid, m.density]),
                       delimiter=",", header="grid,density", comments="", fmt="%.17g")
    s3 = sigma3_samples(pooled[:, spec.d + 2:spec.d + 6])
    summary = {
        "schema": RUN_SCHEMA,
        "names": names,
        "n_retained": int(pooled.shape[0]),
        "parameters": summarize(pooled, names),
        "sigma3_mean": s3.mean(axis=0).tolist(),
        "chains": [
            {
                "acceptance_rate": c.acceptance_rate,
                "betas": list(c.config.betas),
                "pilot_history": hist,
                "final_log_posterior": c.final_log_post,
            }
            for c, hist in results
        ],
    }
    if prediction:
        summary["s_test_mean"] = pooled[:, -spec.d:].mean(axis=0).tolist()
    _write_json(out / "summary.json", summary)
    for c_i, (c, _) in enumerate(results):
        print(f"chain {c_i}: acceptance {c.acceptance_rate:.3f}, final log-posterior {c.final_log_post:.3f}")
    if prediction:
        print("s_test posterior mean: " + ", ".join(f"{v:.6g}" for v in summary["s_test_mean"]))
    print(f"outputs in {out}")
    return EXIT_OK


def cmd_fit(args):
    return _run_sampling(args, prediction=False)


def cmd_predict(args):
    return _run_sampling(args, prediction=True)


def _read_chain(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InsufficientDataError(f"{path}: empty file")
        rows = [r for r in reader if r]
    if not rows:
        return header, np.empty((0, len(header)))
    try:
        return header, np.array(rows, dtype=float)
    except ValueError:
        raise DataFormatError(f"{path}: non-numeric rows") from None


def cmd_diagnose(args):
    run = args.run
    chain_files = sorted(run.glob("chain_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if not chain_files:
        raise DataFormatError(f"{run}: no chain_*.csv files")
    report = {"schema": RUN_SCHEMA, "window_fraction": args.window_fraction, "chains": []}
    a12, a21, a_all = [], [], []
    for path in chain_files:
        header, rows = _read_chain(path)
        if rows.shape[0] == 0:
            raise InsufficientDataError(f"{path}: no retained draws")
        lp = rows[:, header.index("log_posterior")]
        st = stationarity_check(lp, window_fraction=args.window_fraction)
        report["chains"].append({"file": path.name, "n": int(rows.shape[0]), "stationarity": st.to_dict()})
        cols = [header.index(c) for c in ("a3_11", "a3_12", "a3_21", "a3_22")]
        a_all.append(rows[:, cols])
    sym = symmetry_report(np.vstack(a_all), np.random.default_rng(args.seed), p_threshold=args.p_threshold,
                          rotate=not args.no_rotate)
    report["symmetry"] = sym.to_dict()
    report["all_stationary"] = all(c["stationarity"]["passed"] for c in report["chains"])
    _write_json(run / "diagnostics.json", report)
    for c in report["chains"]:
        st = c["stationarity"]
        print(f"{c['file']}: stationarity {'PASS' if st['passed'] else 'FAIL'} (z={st['z_score']:.3f})")
    print(f"symmetry a3_12 vs a3_21: {'ASYMMETRY DETECTED' if sym.flagged else 'no flag'} "
          f"(p={sym.p_value:.4g}, KS p={sym.ks_p_value:.4g}, TV={sym.tv_distance:.4f})")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict, "diagnose": cmd_diagnose}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"tensorgp {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, InsufficientDataError, ConfigurationError, OSError) as exc:
        print(f"tensorgp {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InitializationError, FactorizationError, DomainError, np.linalg.LinAlgError) as exc:
        print(f"tensorgp {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
