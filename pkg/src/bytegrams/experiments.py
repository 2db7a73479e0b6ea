"""Level-N generality sweeps over malware-family combinations.

A level-N cell classifies the union of N families against the full benign
pool.  Per level the driver enumerates all C(F, N) family combinations in
lexicographic order, keeps at most max_models of them via a seeded
Fisher-Yates shuffle prefix (without replacement), and runs the extraction →
selection → cross-validation pipeline on each.  Every random stream is
derived from (master seed, level, combination rank, learner variant) and
never from hyperparameter values, so sweep cells reproduce standalone runs
and execution order or worker count cannot change any result.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import multiprocessing
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import BENIGN_FAMILY, Sample
from .errors import BytegramsError, ConfigError
from .evaluation import (
    DEFAULT_FOLDS,
    EvalOutcome,
    cross_validate,
    outcome_from_predictions,
    stratified_folds,
    write_outcomes_csv,
)
from .features import build_matrix, select_features, vectorize
from .learners import LearnerConfig, default_configs, train
from .ngrams import (
    BENIGN_SAMPLE_BUDGET,
    FAMILY_BUDGET,
    MALWARE_SAMPLE_BUDGET,
    NGramDictionary,
    build_family_dict,
    build_sample_dicts,
)
from .seeds import derive_seed

log = logging.getLogger(__name__)

DEFAULT_MAX_MODELS = 100
DEFAULT_N = 2
DEFAULT_M = 20


@dataclass(frozen=True)
class CorpusDicts:
    """Extraction output: budgeted per-sample and per-family dictionaries."""

    n: int
    sample_dicts: dict  # family -> {sample id -> NGramDictionary}
    family_dicts: dict  # malware family -> NGramDictionary (family budget)

    @property
    def families(self) -> tuple:
        return tuple(sorted(self.family_dicts))

    @property
    def benign_ids(self) -> tuple:
        return tuple(sorted(self.sample_dicts.get(BENIGN_FAMILY, {})))


def extract_corpus(samples, n: int) -> CorpusDicts:
    """Count and budget-truncate dictionaries for every sample and family."""
    by_family: dict[str, list[Sample]] = {}
    for sample in samples:
        by_family.setdefault(sample.family, []).append(sample)
    if BENIGN_FAMILY not in by_family:
        raise ConfigError("corpus has no benign samples")
    if len(by_family) < 2:
        raise ConfigError("corpus has no malware families")
    sample_dicts = {}
    family_dicts = {}
    for family in sorted(by_family):
        members = sorted(by_family[family], key=lambda s: s.id)
        budget = (BENIGN_SAMPLE_BUDGET if family == BENIGN_FAMILY
                  else MALWARE_SAMPLE_BUDGET)
        per_sample = build_sample_dicts(members, n, budget)
        sample_dicts[family] = per_sample
        if family != BENIGN_FAMILY:
            ordered = [per_sample[sid] for sid in sorted(per_sample)]
            family_dicts[family] = build_family_dict(ordered, FAMILY_BUDGET)
    return CorpusDicts(n=int(n), sample_dicts=sample_dicts,
                       family_dicts=family_dicts)


def enumerate_combinations(F: int, N: int) -> list:
    """All C(F, N) index subsets in lexicographic order."""
    if not (isinstance(F, (int, np.integer)) and F >= 1):
        raise ConfigError(f"family count must be a positive integer, got {F}")
    if not (isinstance(N, (int, np.integer)) and 1 <= N <= F):
        raise ConfigError(f"level must be in [1, {F}], got {N}")
    return [tuple(c) for c in itertools.combinations(range(F), N)]


def models_to_run(F: int, N: int, max_models: int = DEFAULT_MAX_MODELS) -> int:
    return min(int(max_models), math.comb(F, N))


def sample_combinations(combos: list, max_models: int, seed: int) -> list:
    """Shuffle-prefix selection: at most max_models distinct combinations.

    When the enumeration already fits the budget it is returned unchanged.
    Otherwise a full Fisher-Yates shuffle runs over a copy (iterating from
    the last index down, swapping with a uniform draw at or below it) and the
    first max_models entries are kept.
    """
    if not (isinstance(max_models, (int, np.integer)) and max_models >= 1):
        raise ConfigError(
            f"max_models must be a positive integer, got {max_models}")
    if len(combos) <= max_models:
        return list(combos)
    arr = list(combos)
    n = len(arr)
    rng = np.random.Generator(np.random.PCG64(seed))
    # draw j_i ~ U[0, i] for i = n-1 .. 1 in one vectorized call
    draws = rng.integers(0, np.arange(n, 1, -1, dtype=np.int64))
    for t, i in enumerate(range(n - 1, 0, -1)):
        j = int(draws[t])
        arr[i], arr[j] = arr[j], arr[i]
    return arr[:max_models]


@dataclass(frozen=True)
class LevelConfig:
    level: int
    families: tuple
    max_models: int = DEFAULT_MAX_MODELS
    seed: int = 0
    n: int = DEFAULT_N
    m: int = DEFAULT_M
    learners: tuple = field(default_factory=lambda: tuple(default_configs()))
    n_folds: int = DEFAULT_FOLDS
    select_per_fold: bool = False


@dataclass
class ComboResult:
    level: int
    rank: int
    families: tuple
    outcomes: dict = field(default_factory=dict)  # variant -> outcome pair
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class LevelResult:
    level: int
    config: LevelConfig
    records: list

    def completed(self) -> list:
        return [r for r in self.records if r.ok]

    def balanced_accuracies(self, variant: str) -> list:
        return [r.outcomes[variant]["pooled"].balanced_accuracy
                for r in self.completed()]

    def aggregate(self, variant: str) -> dict:
        values = self.balanced_accuracies(variant)
        if not values:
            return {"high": None, "avg": None, "low": None, "count": 0}
        return {"high": max(values), "avg": sum(values) / len(values),
                "low": min(values), "count": len(values)}


def _combo_record(cfg: LevelConfig, dicts: CorpusDicts, rank: int,
                  combo: tuple) -> ComboResult:
    families = tuple(cfg.families[i] for i in combo)
    record = ComboResult(level=cfg.level, rank=rank, families=families)
    try:
        _evaluate_combo(cfg, dicts, rank, families, record)
    except BytegramsError as exc:
        log.warning("level %d combo %d %s failed: %s",
                    cfg.level, rank, "+".join(families), exc)
        record.error = str(exc)
    return record


def _pool_dicts(dicts: CorpusDicts, families) -> dict:
    pool = dict(dicts.sample_dicts[BENIGN_FAMILY])
    for family in families:
        pool.update(dicts.sample_dicts[family])
    return pool


def _evaluate_combo(cfg, dicts, rank, families, record) -> None:
    pool = _pool_dicts(dicts, families)
    malware_ids = sorted(
        sid for family in families for sid in dicts.sample_dicts[family])
    benign_ids = list(dicts.benign_ids)
    labels = np.array([1] * len(malware_ids) + [-1] * len(benign_ids),
                      dtype=np.int64)
    fold_seed = derive_seed(cfg.seed, "folds", cfg.level, rank)
    plan = stratified_folds(labels, cfg.n_folds, seed=fold_seed)

    if not cfg.select_per_fold:
        fs = select_features([dicts.family_dicts[f] for f in families],
                             cfg.m, provenance=list(families))
        matrix = build_matrix(pool, malware_ids, benign_ids, fs)
        for lc in cfg.learners:
            seed_l = derive_seed(cfg.seed, "learner", cfg.level, rank,
                                 lc.variant)
            pooled, per_fold = cross_validate(
                matrix.X, matrix.z, plan,
                lambda Xt, zt, fold, _lc=lc, _s=seed_l:
                    train(_lc, Xt, zt, seed=_s))
            record.outcomes[lc.variant] = {"pooled": pooled,
                                           "per_fold": per_fold}
        return

    # per-fold selection: features come from the training split only
    ids = malware_ids + benign_ids
    n_rows = len(ids)
    all_scores = {lc.variant: np.zeros(n_rows) for lc in cfg.learners}
    all_preds = {lc.variant: np.zeros(n_rows, dtype=np.int64)
                 for lc in cfg.learners}
    fold_outcomes = {lc.variant: [] for lc in cfg.learners}
    for fold in range(plan.n_folds):
        train_rows = plan.rows_out(fold)
        test_rows = plan.rows_in(fold)
        train_ids = set(ids[r] for r in train_rows)
        fold_family_dicts = []
        for family in families:
            members = [d for sid, d in sorted(
                dicts.sample_dicts[family].items()) if sid in train_ids]
            fold_family_dicts.append(build_family_dict(members, FAMILY_BUDGET))
        fs = select_features(fold_family_dicts, cfg.m,
                             provenance=list(families))
        X = np.vstack([vectorize(pool[sid], fs) for sid in ids])
        for lc in cfg.learners:
            seed_l = derive_seed(cfg.seed, "learner", cfg.level, rank,
                                 lc.variant)
            model = train(lc, X[train_rows], labels[train_rows], seed=seed_l)
            s = model.scores(X[test_rows])
            p = model.predict(X[test_rows])
            all_scores[lc.variant][test_rows] = s
            all_preds[lc.variant][test_rows] = p
            fold_outcomes[lc.variant].append(
                outcome_from_predictions(labels[test_rows], p, s))
    for lc in cfg.learners:
        pooled = outcome_from_predictions(
            labels, all_preds[lc.variant], all_scores[lc.variant])
        record.outcomes[lc.variant] = {"pooled": pooled,
                                       "per_fold": fold_outcomes[lc.variant]}


_FORK_STATE = None


def _fork_entry(task):
    cfg, dicts = _FORK_STATE
    rank, combo = task
    return _combo_record(cfg, dicts, rank, combo)


def run_level(cfg: LevelConfig, dicts: CorpusDicts,
              jobs: int = 1) -> LevelResult:
    """Evaluate every sampled combination of cfg.level families."""
    global _FORK_STATE
    if tuple(cfg.families) != dicts.families:
        raise ConfigError(
            "config families do not match the extracted corpus "
            f"({list(cfg.families)!r} vs {list(dicts.families)!r})")
    if cfg.n != dicts.n:
        raise ConfigError(
            f"config n={cfg.n} does not match extracted n={dicts.n}")
    combos = enumerate_combinations(len(cfg.families), cfg.level)
    chosen = sample_combinations(
        combos, cfg.max_models, derive_seed(cfg.seed, "combos", cfg.level))
    tasks = list(enumerate(chosen))
    log.info("level %d: %d of %d combinations", cfg.level, len(tasks),
             len(combos))
    if jobs <= 1 or len(tasks) <= 1:
        records = [_combo_record(cfg, dicts, rank, combo)
                   for rank, combo in tasks]
    else:
        ctx = multiprocessing.get_context("fork")
        _FORK_STATE = (cfg, dicts)
        try:
            with ctx.Pool(processes=min(int(jobs), len(tasks))) as workers:
                records = workers.map(_fork_entry, tasks, chunksize=1)
        finally:
            _FORK_STATE = None
    return LevelResult(level=cfg.level, config=cfg, records=records)


def run_all_levels(cfg: LevelConfig, dicts: CorpusDicts, levels=None,
                   jobs: int = 1) -> list:
    if levels is None:
        levels = range(1, len(cfg.families) + 1)
    return [run_level(replace(cfg, level=int(level)), dicts, jobs=jobs)
            for level in levels]


def sweep_learner(cfg: LevelConfig, dicts: CorpusDicts, levels, values,
                  make_config, jobs: int = 1) -> list:
    """Grid of (level, hyperparameter value) -> LevelResult cells."""
    cells = []
    for level in levels:
        for value in values:
            run_cfg = replace(cfg, level=int(level),
                              learners=(make_config(value),))
            cells.append((int(level), value,
                          run_level(run_cfg, dicts, jobs=jobs)))
    return cells


RF_SWEEP_LEVELS = (1, 5, 10, 15, 20)
RF_SWEEP_DEPTHS = (5, 10, 15, 20, 25)
MLP_SWEEP_LEVELS = (1, 5, 10, 15, 20)
MLP_SWEEP_ALPHAS = (1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)


def sweep_rf_depth(cfg: LevelConfig, dicts: CorpusDicts,
                   levels=RF_SWEEP_LEVELS, depths=RF_SWEEP_DEPTHS,
                   jobs: int = 1) -> list:
    return sweep_learner(
        cfg, dicts, levels, depths,
        lambda d: LearnerConfig("random_forest",
                                {"n_trees": 10, "max_depth": int(d)}),
        jobs=jobs)


def sweep_mlp_alpha(cfg: LevelConfig, dicts: CorpusDicts,
                    levels=MLP_SWEEP_LEVELS, alphas=MLP_SWEEP_ALPHAS,
                    jobs: int = 1) -> list:
    return sweep_learner(
        cfg, dicts, levels, alphas,
        lambda a: LearnerConfig("mlp", {"hidden": 100, "alpha": float(a),
                                        "max_iter": 200}),
        jobs=jobs)


def run_ngram_comparison(samples, cfg: LevelConfig, n_values, levels=None,
                         jobs: int = 1) -> dict:
    """Repeat the full level sweep per gram length on one corpus.

    Combination sampling and all learner seeds exclude n, so every n sees
    identical family sets per level.
    """
    out = {}
    for n in n_values:
        dicts = extract_corpus(samples, int(n))
        run_cfg = replace(cfg, n=int(n))
        out[int(n)] = run_all_levels(run_cfg, dicts, levels=levels, jobs=jobs)
    return out


# --- result files ---------------------------------------------------------
# per level:   level_NN.csv        (schema: evaluation.OUTCOME_CSV_HEADER)
#              level_NN_combos.csv (level,combo_id,families,error)
# run summary: summary.csv         (level,learner,high,avg,low,count)

SUMMARY_CSV_HEADER = ["level", "learner", "high", "avg", "low", "count"]


def _atomic_replace(path: Path, write_fn) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write_fn(tmp)
    os.replace(tmp, path)


def write_level_csv(path, result: LevelResult) -> None:
    rows = []
    for rec in result.records:
        if not rec.ok:
            continue
        for lc in result.config.learners:
            pair = rec.outcomes[lc.variant]
            for fold, outcome in enumerate(pair["per_fold"]):
                rows.append((result.level, rec.rank, lc.variant, fold,
                             outcome))
            rows.append((result.level, rec.rank, lc.variant, "pooled",
                         pair["pooled"]))
    _atomic_replace(Path(path), lambda p: write_outcomes_csv(p, rows))


def write_combos_csv(path, result: LevelResult) -> None:
    def _write(p):
        with open(p, "w", encoding="ascii", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["level", "combo_id", "families", "error"])
            for rec in result.records:
                writer.writerow([str(result.level), str(rec.rank),
                                 "|".join(rec.families), rec.error or ""])
    _atomic_replace(Path(path), _write)


def write_summary_csv(path, results: list) -> None:
    def _write(p):
        with open(p, "w", encoding="ascii", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SUMMARY_CSV_HEADER)
            for result in results:
                for lc in result.config.learners:
                    agg = result.aggregate(lc.variant)
                    writer.writerow([
                        str(result.level), lc.variant,
                        "" if agg["high"] is None else repr(agg["high"]),
                        "" if agg["avg"] is None else repr(agg["avg"]),
                        "" if agg["low"] is None else repr(agg["low"]),
                        str(agg["count"]),
                    ])
    _atomic_replace(Path(path), _write)


def write_sweep_csv(path, cells: list, param_name: str) -> None:
    """cells: (level, value, LevelResult) triples from sweep_learner."""
    def _write(p):
        with open(p, "w", encoding="ascii", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["level", param_name, "learner",
                             "high", "avg", "low", "count"])
            for level, value, result in cells:
                for lc in result.config.learners:
                    agg = result.aggregate(lc.variant)
                    writer.writerow([
                        str(level), repr(value) if isinstance(value, float)
                        else str(value), lc.variant,
                        "" if agg["high"] is None else repr(agg["high"]),
                        "" if agg["avg"] is None else repr(agg["avg"]),
                        "" if agg["low"] is None else repr(agg["low"]),
                        str(agg["count"]),
                    ])
    _atomic_replace(Path(path), _write)


def write_run_results(out_dir, results: list) -> None:
    """Per-level detail and combo files plus the run summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for result in results:
        write_level_csv(out / f"level_{result.level:02d}.csv", result)
        write_combos_csv(out / f"level_{result.level:02d}_combos.csv", result)
    write_summary_csv(out / "summary.csv", results)
