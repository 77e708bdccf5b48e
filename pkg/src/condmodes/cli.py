"""Command-line front end.

Subcommands: fit, select, simulate, bench-modes, evaluate. Exit status 0 on
success, 1 on usage errors, 2 on bad input data, 3 on numerical or
estimation failures.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, bayes, evaluation, search, sim
from .core import (
    BlockPartition,
    CategoricalDataset,
    DataError,
    ModelSpec,
    StructureError,
    align_levels,
    all_cells,
    encode_blocks,
    read_csv,
    write_csv,
)
from .em import DEFAULT_MAX_ITER, DEFAULT_STARTS, DEFAULT_TOL, EstimationError, cim_em_fit, e_step, em_fit
from .io import FittedModel, load_model, model_from_dict, model_to_dict, read_json, save_model, write_json, write_table
from .likelihood import cell_log_pmf, summaries
from .special import DomainError

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _nonneg(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be a nonnegative integer")
    return value


def _common(p):
    p.add_argument("--seed", type=_u64, default=0, help="64-bit seed for every random stream (default 0)")
    p.add_argument("--threads", type=_positive, default=1, help="worker processes")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="directory for output files")


def _em_flags(p):
    p.add_argument("--starts", type=_positive, default=DEFAULT_STARTS)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=_positive, default=DEFAULT_MAX_ITER)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="condmodes", description="Conditional modes mixture models for categorical data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a fixed model structure by EM")
    p.add_argument("data", type=Path)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", type=Path, help="JSON with g, sigma (variable-name lists) and modes")
    src.add_argument("--classes", type=_positive, help="class count; see --sigma and --modes")
    p.add_argument("--sigma", help='blocks as 1-based variable numbers, e.g. "1,2|3" (default: singletons)')
    p.add_argument("--modes", help='one integer for every block, or rows "2,2;1,3" (default: m_j - 1)')
    p.add_argument("--cim", action="store_true", help="fit the latent class model instead")
    _em_flags(p)
    _common(p)

    p = sub.add_parser("select", help="search structures for each g and rank them by BIC")
    p.add_argument("data", type=Path)
    p.add_argument("--gmin", type=_positive, default=1)
    p.add_argument("--gmax", type=_positive, default=4)
    p.add_argument("--chains", type=_positive, default=search.DEFAULT_CHAINS)
    p.add_argument("--iters", type=_positive, default=search.DEFAULT_ITERS)
    p.add_argument("--burnin", type=_nonneg, default=search.DEFAULT_BURNIN)
    p.add_argument("--cap", type=_positive, default=search.DEFAULT_CAP, help="largest allowed block size")
    p.add_argument("--mode-update", choices=("metropolized", "gibbs"), default="metropolized")
    p.add_argument("--with-cim", action="store_true", help="add latent class rows to the BIC table")
    p.add_argument("--no-trace", action="store_true", help="skip per-chain trace files")
    _em_flags(p)
    _common(p)

    p = sub.add_parser("simulate", help="generate datasets from a simulation design")
    p.add_argument("design", choices=("modes", "cmm", "misspec"))
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--reps", type=_positive, default=1)
    p.add_argument("--r", type=float, default=0.3, help="mode mass (modes design)")
    p.add_argument("--s", type=int, default=9, help="category count (modes design)")
    p.add_argument("--lam", type=float, default=0.8, help="pair coupling strength (misspec design)")
    p.add_argument("--model", type=Path, help="model.json to sample from (cmm design; default built-in truth)")
    _common(p)

    p = sub.add_parser("bench-modes", help="mode-count selection curves for one known class")
    p.add_argument("--r", type=float, default=0.3)
    p.add_argument("--s", type=int, default=9)
    p.add_argument("--n-grid", default="50,100,200,400,800")
    p.add_argument("--reps", type=_positive, default=200)
    _common(p)

    p = sub.add_parser("evaluate", help="diagnostics for a fitted model")
    p.add_argument("model", type=Path)
    p.add_argument("data", type=Path)
    p.add_argument("truth", type=Path, nargs="?", help="truth.json written by simulate")
    p.add_argument("--labels", type=Path, help="CSV with a 'label' column to cross-tabulate")
    p.add_argument("--bootstrap-reps", type=_nonneg, default=1000, help="0 skips the bootstrap test")
    _common(p)
    return parser


def _parse_modes(text: str | None, g: int, sizes) -> tuple[tuple[int, ...], ...]:
    d = len(sizes)
    if text is None:
        return tuple(tuple(m - 1 for m in sizes) for _ in range(g))
    try:
        rows = [[int(x) for x in row.split(",")] for row in text.split(";")]
    except ValueError:
        raise UsageError(f"cannot parse --modes {text!r}") from None
    if len(rows) == 1 and len(rows[0]) == 1:
        return tuple(tuple(rows[0][0] for _ in range(d)) for _ in range(g))
    if len(rows) == 1 and len(rows[0]) == d:
        return tuple(tuple(rows[0]) for _ in range(g))
    if len(rows) == g and all(len(r) == d for r in rows):
        return tuple(tuple(r) for r in rows)
    raise UsageError(f"--modes needs 1, {d} or {g}x{d} integers")


def _spec_from_doc(doc: dict, dataset: CategoricalDataset) -> ModelSpec:
    try:
        index = {n: i for i, n in enumerate(dataset.names)}
        blocks = tuple(tuple(index[n] for n in blk) for blk in doc["sigma"])
        return ModelSpec(int(doc["g"]), BlockPartition(blocks), tuple(tuple(r) for r in doc["modes"]), dataset.cards)
    except KeyError as exc:
        raise DataError(f"spec document: unknown or missing entry {exc.args[0]!r}") from None


def _bic_of(fit, n) -> float:
    return bayes.bic(fit.loglik, fit.spec.n_params, n)


def _kappa_rho_rows(model: FittedModel):
    kappa, rho = summaries(model.params, model.spec)
    for k in range(model.spec.g):
        for j, blk in enumerate(model.spec.partition.blocks):
            yield [k + 1, "+".join(model.names[v] for v in blk), model.spec.modes[k][j],
                   model.spec.block_sizes[j], float(kappa[k, j]), float(rho[k, j])]


def _write_fit_outputs(out: Path, model: FittedModel, resp: np.ndarray, stem: str = "") -> None:
    save_model(model, out / f"{stem}model.json")
    g = model.spec.g
    rows = ([i + 1, int(np.argmax(resp[i])) + 1] + [float(x) for x in resp[i]] for i in range(resp.shape[0]))
    write_table(out / f"{stem}partition.csv", ["individual", "label"] + [f"t{k + 1}" for k in range(g)], rows)
    write_table(out / f"{stem}kappa_rho.csv", ["class", "block", "modes", "crossings", "kappa", "rho"],
                _kappa_rho_rows(model))


def cmd_fit(args) -> None:
    dataset = read_csv(args.data)
    if args.spec is not None:
        if args.sigma or args.modes or args.cim:
            raise UsageError("--spec cannot be combined with --sigma, --modes or --cim")
        spec = _spec_from_doc(read_json(args.spec), dataset)
    else:
        partition = BlockPartition.parse(args.sigma) if args.sigma else BlockPartition.singletons(dataset.n_vars)
        if args.cim and (args.sigma or args.modes):
            raise UsageError("--cim uses singleton blocks with all modes; drop --sigma/--modes")
        sizes = partition.block_sizes(dataset.cards) if partition.n_vars == dataset.n_vars else ()
        spec = ModelSpec(args.classes, partition, _parse_modes(args.modes, args.classes, sizes), dataset.cards)
    data = encode_blocks(dataset, spec.partition)
    seed = np.random.SeedSequence(args.seed, spawn_key=(spec.g, 1))
    if args.cim:
        fit = cim_em_fit(data, spec.g, args.starts, args.tol, args.max_iter, seed=seed, threads=args.threads)
    else:
        fit = em_fit(data, spec, args.starts, args.tol, args.max_iter, seed=seed, threads=args.threads)
    model = FittedModel(fit.spec, fit.params, dataset.names, dataset.levels, float(fit.loglik),
                        _bic_of(fit, dataset.n), args.seed,
                        {"method": "cim" if args.cim else "cmm", "n": dataset.n, "starts": args.starts})
    args.out_dir.mkdir(parents=True, exist_ok=True)
    _write_fit_outputs(args.out_dir, model, fit.resp)
    write_table(args.out_dir / "bic.csv", ["g", "sigma", "modes", "nu", "loglik", "bic"],
                [[spec.g, str(spec.partition), search.format_modes(list(zip(*spec.modes))), spec.n_params,
                  float(fit.loglik), model.bic]])
    print(f"loglik={fit.loglik!r} bic={model.bic!r} nu={spec.n_params}")


def cmd_select(args) -> None:
    if args.gmin > args.gmax:
        raise UsageError("--gmin exceeds --gmax")
    if args.burnin >= args.iters:
        raise UsageError("--burnin must be smaller than --iters")
    dataset = read_csv(args.data)
    result = search.select_model(
        dataset, args.gmin, args.gmax, args.chains, args.iters, args.burnin, args.seed, args.cap,
        args.starts, args.tol, args.max_iter, args.mode_update, args.threads, record_trace=not args.no_trace,
    )
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for res in result.by_g:
        model = FittedModel(res.spec, res.fit.params, dataset.names, dataset.levels, float(res.fit.loglik),
                            float(res.bic), args.seed,
                            {"method": "cmm", "n": dataset.n, "visits": res.visits,
                             "acceptance": [r.acceptance_rate for r in res.chains]})
        _write_fit_outputs(out, model, res.fit.resp, stem=f"g{res.g}_")
        rows.append(["cmm", res.g, str(res.spec.partition), search.format_modes(list(zip(*res.spec.modes))),
                     res.spec.n_params, float(res.fit.loglik), float(res.bic), res.visits])
        if not args.no_trace:
            for c, chain in enumerate(res.chains):
                search.write_trace(chain.trace, out / f"trace_g{res.g}_chain{c + 1}.csv")
    best = result.best
    save_model(FittedModel(best.spec, best.fit.params, dataset.names, dataset.levels, float(best.fit.loglik),
                           float(best.bic), args.seed, {"method": "cmm", "n": dataset.n, "visits": best.visits}),
               out / "model.json")
    if args.with_cim:
        for g, fit, score in search.select_cim(dataset, args.gmin, args.gmax, args.starts, args.tol,
                                               args.max_iter, args.seed, args.threads):
            rows.append(["cim", g, str(fit.spec.partition), search.format_modes(list(zip(*fit.spec.modes))),
                         fit.spec.n_params, float(fit.loglik), float(score), 0])
    write_table(out / "bic_table.csv", ["model", "g", "sigma", "modes", "nu", "loglik", "bic", "visits"], rows)
    print(f"selected g={best.g} sigma={best.spec.partition} bic={best.bic!r}")


def _replicate_paths(out: Path, reps: int, stem: str) -> list[Path]:
    if reps == 1:
        return [out / f"{stem}.csv"]
    width = len(str(reps))
    return [out / f"{stem}_{r + 1:0{width}d}.csv" for r in range(reps)]


def cmd_simulate(args) -> None:
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    streams = np.random.SeedSequence(args.seed).spawn(args.reps)
    data_paths = _replicate_paths(out, args.reps, "data")
    label_paths = _replicate_paths(out, args.reps, "labels")
    truth: dict = {"design": args.design, "n": args.n, "reps": args.reps, "seed": args.seed,
                   "files": [p.name for p in data_paths]}
    if args.design == "modes":
        try:
            probs = sim.modes_multinomial_probs(args.s, args.r)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        truth.update(r=args.r, s=args.s, probs=[float(p) for p in probs])
        levels = (tuple(str(h + 1) for h in range(args.s)),)
        for path, ss in zip(data_paths, streams):
            x = sim.gen_modes_multinomial(args.n, args.s, args.r, ss)
            write_csv(CategoricalDataset(("x1",), levels, x.reshape(-1, 1)), path)
    else:
        if args.design == "cmm":
            if args.model is not None:
                fitted = load_model(args.model)
                spec, params, names = fitted.spec, fitted.params, fitted.names
                truth["model"] = model_to_dict(fitted)
            else:
                spec, params = sim.well_specified_truth()
                names = tuple(f"x{b + 1}" for b in range(len(spec.cards)))
                levels = tuple(tuple(str(h + 1) for h in range(m)) for m in spec.cards)
                truth["model"] = model_to_dict(FittedModel(spec, params, names, levels))
            gen = lambda ss: sim.gen_cmm(spec, params, args.n, ss, names)  # noqa: E731
        else:
            if not 0 <= args.lam <= 1:
                raise UsageError("--lam must lie in [0, 1]")
            truth["lambda"] = args.lam
            gen = lambda ss: sim.gen_misspecified(args.n, args.lam, ss)  # noqa: E731
        for path, lpath, ss in zip(data_paths, label_paths, streams):
            ds, labels = gen(ss)
            if args.design == "cmm" and args.model is not None:
                ds = CategoricalDataset(ds.names, fitted.levels, ds.cells)
            write_csv(ds, path)
            write_table(lpath, ["label"], ([int(z) + 1] for z in labels))
        truth["label_files"] = [p.name for p in label_paths]
    write_json(truth, out / "truth.json")
    print(f"wrote {args.reps} dataset(s) to {out}")


def cmd_bench_modes(args) -> None:
    try:
        probs = sim.modes_multinomial_probs(args.s, args.r)
        grid = [int(x) for x in args.n_grid.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not grid or min(grid) < 1:
        raise UsageError("--n-grid needs positive sample sizes")
    rows = []
    for n in grid:
        streams = np.random.SeedSequence(args.seed, spawn_key=(n,)).spawn(args.reps)
        picks = {"integrated": [], "bic": []}
        for ss in streams:
            counts = np.bincount(np.random.default_rng(ss).choice(args.s, size=n, p=probs), minlength=args.s)
            picks["integrated"].append(search.mode_count_evidence(counts))
            picks["bic"].append(search.mode_count_bic(counts))
        for name, sel in picks.items():
            sel = np.array(sel)
            rows.append([n, name, float(np.mean(sel == 3)), float(np.mean(sel > 3)), float(np.mean(sel < 3))])
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / "mode_curves.csv", ["n", "criterion", "p_correct", "p_over", "p_under"], rows)
    print(f"wrote {len(rows)} rows to {out / 'mode_curves.csv'}")


def _truth_log_pmf(truth: dict, names, levels) -> np.ndarray:
    """Truth log-probabilities on every cell of the model's level order."""
    cells = all_cells(tuple(len(lv) for lv in levels))
    design = truth.get("design")
    if design == "cmm":
        tm = model_from_dict(truth["model"])
        tnames, tlevels = tm.names, tm.levels
    elif design == "misspec":
        tnames = tuple(f"x{b + 1}" for b in range(sim.MISSPEC_VARS))
        tlevels = tuple(tuple(str(h + 1) for h in range(sim.MISSPEC_LEVELS)) for _ in tnames)
    else:
        raise DataError(f"no joint truth distribution for design {design!r}")
    if set(tnames) != set(names):
        raise DataError("truth and model describe different variables")
    tcells = np.empty_like(cells)
    for b, name in enumerate(names):
        tb = tnames.index(name)
        index = {lab: h for h, lab in enumerate(tlevels[tb])}
        if set(index) != set(levels[b]):
            raise DataError(f"variable {name!r}: truth and model modalities differ")
        tcells[:, tb] = np.array([index[lab] for lab in levels[b]])[cells[:, b]]
    if design == "cmm":
        return cell_log_pmf(tm.params, tm.spec, tcells)
    return sim.misspecified_log_pmf(float(truth["lambda"]), tcells)


def cmd_evaluate(args) -> None:
    model = load_model(args.model)
    dataset = align_levels(read_csv(args.data), model.names, model.levels)
    data = encode_blocks(dataset, model.spec.partition)
    resp, loglik = e_step(data, model.params)
    labels = np.argmax(resp, axis=1)
    g = model.spec.g
    ident = evaluation.identifiability_check(model.spec)
    report: dict = {
        "n": dataset.n,
        "loglik": loglik,
        "bic": bayes.bic(loglik, model.spec.n_params, dataset.n),
        "nu": model.spec.n_params,
        "identifiability": {"status": ident.status, "witness": ident.witness, "message": ident.message},
        "class_sizes": [int(x) for x in np.bincount(labels, minlength=g)],
    }
    if args.truth is not None:
        truth = read_json(args.truth)
        log_p = _truth_log_pmf(truth, model.names, model.levels)
        log_q = cell_log_pmf(model.params, model.spec)
        report["kl_truth_to_model"] = evaluation.kl_from_log_pmf(log_p, log_q)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    if args.labels is not None:
        ref = read_csv(args.labels)
        if "label" not in ref.names or ref.n != dataset.n:
            raise DataError("labels file needs a 'label' column with one row per individual")
        col = ref.cells[:, ref.names.index("label")]
        names = np.array(ref.levels[ref.names.index("label")])[col]
        order = sorted(set(names), key=lambda s: (len(s), s))
        ref_codes = np.array([order.index(s) for s in names])
        table = evaluation.confusion(ref_codes, labels)
        report["confusion"] = {"rows": order, "table": table.tolist()}
        write_table(out / "confusion.csv", ["reference"] + [f"class{k + 1}" for k in range(table.shape[1])],
                    ([order[i]] + [int(x) for x in table[i]] for i in range(table.shape[0])))
    vs = evaluation.cramers_v_by_class(dataset, labels, g)
    report["cramers_v"] = [[[float(x) for x in row] for row in mat] for mat in vs]
    write_table(out / "cramers_v.csv", ["class", "variable"] + list(model.names),
                ([k + 1, model.names[u]] + [float(x) for x in vs[k][u]] for k in range(g)
                 for u in range(len(model.names))))
    if args.bootstrap_reps > 0:
        boot = evaluation.bootstrap_independence_test(dataset, labels, args.bootstrap_reps, args.seed, g,
                                                      args.threads)
        report["bootstrap"] = {"statistic": boot.statistic, "p_value": boot.p_value,
                               "reps": args.bootstrap_reps}
    write_table(out / "kappa_rho.csv", ["class", "block", "modes", "crossings", "kappa", "rho"],
                _kappa_rho_rows(model))
    write_json(report, out / "report.json")
    summary = [f"loglik={loglik!r}", f"identifiability={ident.status}"]
    if "kl_truth_to_model" in report:
        summary.append(f"kl={report['kl_truth_to_model']!r}")
    if "bootstrap" in report:
        summary.append(f"bootstrap_p={report['bootstrap']['p_value']!r}")
    print(" ".join(summary))


COMMANDS = {
    "fit": cmd_fit,
    "select": cmd_select,
    "simulate": cmd_simulate,
    "bench-modes": cmd_bench_modes,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"condmodes {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, StructureError, FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        print(f"condmodes {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, DomainError, ArithmeticError, FloatingPointError) as exc:
        print(f"condmodes {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
