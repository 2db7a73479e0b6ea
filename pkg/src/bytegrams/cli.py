"""Command-line entry point wiring corpus, extraction, experiments, report.

Every subcommand validates its arguments up front, writes a ``config.used``
provenance file plus a ``run.log`` under ``--out``, and never touches its
inputs.  Summary files are written through a temp-then-rename step inside
the experiments module, so an interrupted run cannot leave a half-written
summary behind.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import report as report_mod
from .errors import BytegramsError, ConfigError
from .experiments import (
    DEFAULT_M,
    DEFAULT_MAX_MODELS,
    DEFAULT_N,
    LevelConfig,
    MLP_SWEEP_ALPHAS,
    MLP_SWEEP_LEVELS,
    RF_SWEEP_DEPTHS,
    RF_SWEEP_LEVELS,
    extract_corpus,
    run_all_levels,
    run_level,
    run_ngram_comparison,
    sweep_mlp_alpha,
    sweep_rf_depth,
    write_run_results,
    write_sweep_csv,
)
from .ngrams import save_dictionary

log = logging.getLogger(__name__)


def _int_list(text: str) -> tuple:
    try:
        values = tuple(int(part) for part in text.split(",") if part != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _float_list(text: str) -> tuple:
    try:
        values = tuple(float(part) for part in text.split(",") if part != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


def _add_source_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", metavar="DIR",
                   help="generated corpus directory (manifest.json + samples/)")
    p.add_argument("--malware-dir", metavar="DIR",
                   help="directory whose subdirectories are malware families")
    p.add_argument("--benign-dir", metavar="DIR",
                   help="directory of benign files (with --malware-dir)")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=int, default=DEFAULT_M,
                   help="number of selected features (default %(default)s)")
    p.add_argument("--max-models", type=int, default=DEFAULT_MAX_MODELS,
                   help="family combinations per level (default %(default)s)")
    p.add_argument("--folds", type=int, default=5,
                   help="cross-validation folds (default %(default)s)")
    p.add_argument("--select-per-fold", action="store_true",
                   help="re-select features from each training split")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for combination runs")


def _load_samples(args) -> list:
    given_tree = args.malware_dir or args.benign_dir
    if args.corpus and given_tree:
        raise ConfigError("pass either --corpus or directory roots, not both")
    if args.corpus:
        samples, _ = corpus_mod.load_corpus(args.corpus)
        return samples
    if not (args.malware_dir and args.benign_dir):
        raise ConfigError(
            "need a sample source: --corpus DIR, or --malware-dir and --benign-dir")
    root = Path(args.malware_dir)
    if not root.is_dir():
        raise ConfigError(f"{root}: not a directory")
    samples = []
    for fam_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        samples.extend(corpus_mod.scan_directory(
            fam_dir, corpus_mod.MALWARE, fam_dir.name))
    samples.extend(corpus_mod.scan_directory(
        args.benign_dir, corpus_mod.BENIGN, corpus_mod.BENIGN_FAMILY))
    return samples


_run_log_handler = None


def _start_run(args) -> Path:
    """Create --out, write config.used, and route logs into the directory."""
    global _run_log_handler
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {k: (str(v) if isinstance(v, Path) else v)
           for k, v in vars(args).items() if k != "func"}
    (out / "config.used").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    pkg_log = logging.getLogger("bytegrams")
    if _run_log_handler is not None:
        pkg_log.removeHandler(_run_log_handler)
        _run_log_handler.close()
    _run_log_handler = logging.FileHandler(out / "run.log", encoding="utf-8")
    _run_log_handler.setFormatter(logging.Formatter(
        "%(asctime)s %(levelname)s %(name)s: %(message)s"))
    pkg_log.addHandler(_run_log_handler)
    return out


def _level_config(args, dicts, level: int) -> LevelConfig:
    return LevelConfig(
        level=level, families=dicts.families, max_models=args.max_models,
        seed=args.seed, n=args.n, m=args.m, n_folds=args.folds,
        select_per_fold=args.select_per_fold)


# --- subcommands -------------------------------------------------------------

def _cmd_gen_synth(args) -> int:
    out = _start_run(args)
    if args.specs:
        specs = corpus_mod.load_specs(args.specs)
    else:
        if args.families is None:
            raise ConfigError("need --families N or --specs FILE")
        specs = corpus_mod.auto_specs(
            args.families, seed=args.seed, ngram_len=args.gram_len,
            bias_per_family=args.bias_per_family, min_len=args.min_len,
            max_len=args.max_len, separation=args.separation)
    samples = corpus_mod.generate_synthetic(
        specs, per_family=args.per_family, n_benign=args.benign,
        seed=args.seed)
    manifest = corpus_mod.CorpusManifest(
        seed=args.seed,
        families=[(s.name, args.per_family) for s in specs],
        n_benign=args.benign,
        generator={"kind": "synthetic", "per_family": args.per_family,
                   "benign": args.benign})
    corpus_mod.save_corpus(out, samples, manifest)
    corpus_mod.save_specs(specs, out / "specs.json")
    log.info("wrote %d samples (%d families + benign) under %s",
             len(samples), len(specs), out)
    return 0


def _cmd_scan(args) -> int:
    out = _start_run(args)
    samples = _load_samples(args)
    rows = [{"id": s.id, "family": s.family, "label": s.label,
             "source": s.source, "bytes": s.size()} for s in samples]
    (out / "scan.json").write_text(
        json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    families = sorted({s.family for s in samples})
    log.info("scanned %d samples across %d groups", len(rows), len(families))
    print(f"{len(rows)} samples, groups: {', '.join(families)}")
    return 0


def _cmd_extract(args) -> int:
    out = _start_run(args)
    samples = _load_samples(args)
    dicts = extract_corpus(samples, args.n)
    fam_dir = out / "families"
    fam_dir.mkdir(exist_ok=True)
    for family, d in sorted(dicts.family_dicts.items()):
        save_dictionary(d, fam_dir / f"{family}.dict")
    for family, per_sample in sorted(dicts.sample_dicts.items()):
        sample_dir = out / "samples" / family
        sample_dir.mkdir(parents=True, exist_ok=True)
        for sid, d in sorted(per_sample.items()):
            save_dictionary(d, sample_dir / f"{sid}.dict")
    log.info("extracted %d-gram dictionaries for %d families under %s",
             args.n, len(dicts.family_dicts), out)
    return 0


def _cmd_run_level(args) -> int:
    out = _start_run(args)
    dicts = extract_corpus(_load_samples(args), args.n)
    result = run_level(_level_config(args, dicts, args.level), dicts,
                       jobs=args.jobs)
    write_run_results(out, [result])
    agg = {lc.variant: result.aggregate(lc.variant)
           for lc in result.config.learners}
    log.info("level %d aggregates: %s", args.level, agg)
    return 0


def _cmd_run_all_levels(args) -> int:
    out = _start_run(args)
    dicts = extract_corpus(_load_samples(args), args.n)
    cfg = _level_config(args, dicts, level=1)
    results = run_all_levels(cfg, dicts, levels=args.levels, jobs=args.jobs)
    write_run_results(out, results)
    (out / "summary.txt").write_text(report_mod.summarize(out),
                                     encoding="ascii")
    fig_dir = out / "figures"
    fig_dir.mkdir(exist_ok=True)
    for name, svg in report_mod.build_figures(out):
        (fig_dir / name).write_text(svg, encoding="ascii")
    return 0


def _cmd_sweep_rf_depth(args) -> int:
    out = _start_run(args)
    dicts = extract_corpus(_load_samples(args), args.n)
    cfg = _level_config(args, dicts, level=1)
    cells = sweep_rf_depth(cfg, dicts, levels=args.levels,
                           depths=args.depths, jobs=args.jobs)
    write_sweep_csv(out / "rf_depth.csv", cells, "max_depth")
    return 0


def _cmd_sweep_mlp_alpha(args) -> int:
    out = _start_run(args)
    dicts = extract_corpus(_load_samples(args), args.n)
    cfg = _level_config(args, dicts, level=1)
    cells = sweep_mlp_alpha(cfg, dicts, levels=args.levels,
                            alphas=args.alphas, jobs=args.jobs)
    write_sweep_csv(out / "mlp_alpha.csv", cells, "alpha")
    return 0


def _cmd_compare_ngrams(args) -> int:
    out = _start_run(args)
    samples = _load_samples(args)
    families = tuple(sorted({s.family for s in samples
                             if s.family != corpus_mod.BENIGN_FAMILY}))
    cfg = LevelConfig(
        level=1, families=families, max_models=args.max_models,
        seed=args.seed, n=args.n_values[0], m=args.m, n_folds=args.folds,
        select_per_fold=args.select_per_fold)
    by_n = run_ngram_comparison(samples, cfg, n_values=args.n_values,
                                levels=args.levels, jobs=args.jobs)
    rows = []
    for n in sorted(by_n):
        sub = out / f"n{n}"
        sub.mkdir(exist_ok=True)
        write_run_results(sub, by_n[n])
        for result in by_n[n]:
            for lc in result.config.learners:
                agg = result.aggregate(lc.variant)
                rows.append([str(n), str(result.level), lc.variant]
                            + ["" if agg[k] is None else repr(agg[k])
                               for k in ("high", "avg", "low")]
                            + [str(agg["count"])])
    tmp = out / "ngram_comparison.csv.tmp"
    with open(tmp, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "level", "learner", "high", "avg", "low",
                         "count"])
        writer.writerows(rows)
    tmp.replace(out / "ngram_comparison.csv")
    return 0


def _cmd_report(args) -> int:
    out = _start_run(args)
    groups = None if args.figures == "all" else tuple(
        g for g in args.figures.split(",") if g)
    text = report_mod.summarize(args.results)
    (out / "summary.txt").write_text(text, encoding="ascii")
    for name, svg in report_mod.build_figures(args.results, groups=groups):
        (out / name).write_text(svg, encoding="ascii")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bytegrams",
        description="Byte n-gram malware classification experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic corpus")
    p.add_argument("--families", type=int, default=None,
                   help="number of synthetic malware families")
    p.add_argument("--per-family", type=int, required=True,
                   help="samples per family")
    p.add_argument("--benign", type=int, required=True,
                   help="benign sample count")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--specs", metavar="FILE",
                   help="family spec file instead of --families")
    p.add_argument("--gram-len", type=int, default=2,
                   help="bias gram length (default %(default)s)")
    p.add_argument("--bias-per-family", type=int, default=3,
                   help="distinctive grams per family (default %(default)s)")
    p.add_argument("--min-len", type=int, default=8192,
                   help="minimum sample size in bytes")
    p.add_argument("--max-len", type=int, default=32768,
                   help="maximum sample size in bytes")
    p.add_argument("--separation", type=float, default=0.6,
                   help="share of bias content in [0,1] (default %(default)s)")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.set_defaults(func=_cmd_gen_synth)

    p = sub.add_parser("scan", help="inventory sample sources")
    _add_source_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("extract", help="write budgeted gram dictionaries")
    _add_source_flags(p)
    p.add_argument("--n", type=int, default=DEFAULT_N,
                   help="gram length in bytes (default %(default)s)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("run-level",
                       help="evaluate family combinations at one level")
    _add_source_flags(p)
    _add_run_flags(p)
    p.add_argument("--n", type=int, default=DEFAULT_N,
                   help="gram length in bytes (default %(default)s)")
    p.add_argument("--level", type=int, required=True,
                   help="families per model")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run_level)

    p = sub.add_parser("run-all-levels",
                       help="full level sweep with summary and figures")
    _add_source_flags(p)
    _add_run_flags(p)
    p.add_argument("--n", type=int, default=DEFAULT_N,
                   help="gram length in bytes (default %(default)s)")
    p.add_argument("--levels", type=_int_list, default=None,
                   help="comma-separated level subset (default: all)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run_all_levels)

    p = sub.add_parser("sweep-rf-depth",
                       help="random-forest depth grid over levels")
    _add_source_flags(p)
    _add_run_flags(p)
    p.add_argument("--n", type=int, default=DEFAULT_N,
                   help="gram length in bytes (default %(default)s)")
    p.add_argument("--levels", type=_int_list,
                   default=RF_SWEEP_LEVELS, help="levels to sweep")
    p.add_argument("--depths", type=_int_list,
                   default=RF_SWEEP_DEPTHS, help="tree depth grid")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep_rf_depth)

    p = sub.add_parser("sweep-mlp-alpha",
                       help="perceptron regularization grid over levels")
    _add_source_flags(p)
    _add_run_flags(p)
    p.add_argument("--n", type=int, default=DEFAULT_N,
                   help="gram length in bytes (default %(default)s)")
    p.add_argument("--levels", type=_int_list,
                   default=MLP_SWEEP_LEVELS, help="levels to sweep")
    p.add_argument("--alphas", type=_float_list,
                   default=MLP_SWEEP_ALPHAS, help="penalty grid")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep_mlp_alpha)

    p = sub.add_parser("compare-ngrams",
                       help="repeat the level sweep per gram length")
    _add_source_flags(p)
    _add_run_flags(p)
    p.add_argument("--n-values", type=_int_list, required=True,
                   help="gram lengths, e.g. 2,4,6")
    p.add_argument("--levels", type=_int_list, default=None,
                   help="comma-separated level subset (default: all)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compare_ngrams)

    p = sub.add_parser("report", help="render figures and a text summary")
    p.add_argument("--results", required=True,
                   help="run directory holding result CSVs")
    p.add_argument("--figures", default="all",
                   help="'all' or comma-separated groups: "
                        + ",".join(report_mod.FIGURE_GROUPS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BytegramsError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
