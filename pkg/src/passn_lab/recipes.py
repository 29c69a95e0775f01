"""Named experiment recipes: deterministic (config, seed) -> report rows.

Each recipe reproduces one phenomenon at desk scale and emits the flat
metric rows of reporting.ReportRow plus a JSON summary.  Grid recipes fan
their independent runs over up to PASSN_LAB_THREADS workers; results are
merged in a fixed order, so the outputs do not depend on the worker count.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds, cot, prooftree, trainer
from .errors import DomainError
from .losses import FilterPolicy, LossSpec
from .reporting import ReportRow, flatten_params
from .seeding import derive_rng, derive_seed
from .tasks import corrupt_labels, generate_tasks, single_answer_tasks

__all__ = ["RECIPES", "RecipeResult", "list_recipes", "run_recipe"]


@dataclass
class RecipeResult:
    rows: list
    metrics: dict
    tables: dict = field(default_factory=dict)  # filename -> (header, rows)


def _worker_count() -> int:
    raw = os.environ.get("PASSN_LAB_THREADS", "1").strip() or "1"
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_jobs(fn, items):
    workers = _worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _merge_params(defaults: dict, overrides: dict) -> dict:
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise DomainError(f"unknown recipe parameters: {sorted(unknown)}")
    merged = dict(defaults)
    for key, value in overrides.items():
        if isinstance(defaults[key], tuple):
            value = tuple(value)
        merged[key] = value
    return merged


# ---------------------------------------------------------------------------
# bounds_sweep
# ---------------------------------------------------------------------------

_BOUNDS_DEFAULTS = {
    "p1": 0.5,
    "p2": 0.25,
    "eps": 0.25,
    "k": 2,
    "n_max": 512,
}


def _run_bounds_sweep(params: dict, seed: int) -> RecipeResult:
    tag = flatten_params(params)
    n_values = range(2, int(params["n_max"]) + 1)
    rows = []
    sweep = bounds.bounds_sweep_rows(
        params["p1"], params["p2"], params["eps"], int(params["k"]), n_values
    )
    for n, upper, lower_closed, lower_s in sweep:
        rows.append(ReportRow("bounds_sweep", tag, "upper_bound", upper, n=n))
        rows.append(ReportRow("bounds_sweep", tag, "lower_bound_closed", lower_closed, n=n))
        rows.append(ReportRow("bounds_sweep", tag, "lower_bound_integer_s", lower_s, n=n))
    uppers = [r[1] for r in sweep]
    metrics = {
        "upper_at_2": sweep[0][1],
        "lower_closed_at_2": sweep[0][2],
        "upper_non_increasing": all(b <= a + 1e-12 for a, b in zip(uppers, uppers[1:])),
    }
    return RecipeResult(rows, metrics)


# ---------------------------------------------------------------------------
# misalignment_table
# ---------------------------------------------------------------------------

_MISALIGNMENT_DEFAULTS = {
    "problems": 40,
    "answers": 10,
    "epochs": 4,
    "learning_rate": 1.0,
    "batch_size": 25,
    "steps_per_epoch": 12,
    "label_noise": 0.3,
    "eval_ns": (1, 16, 256),
}


def _trajectory_rows(recipe: str, tag: str, trajectory) -> list:
    rows = []
    for epoch, n, cov, greedy, entropy in trajectory.rows():
        rows.append(ReportRow(recipe, tag, "coverage", cov, n=n, epoch=epoch))
    for snap in trajectory.snapshots:
        rows.append(
            ReportRow(
                recipe, tag, "mean_greedy_confidence",
                snap.mean_greedy_confidence, epoch=snap.epoch,
            )
        )
        rows.append(
            ReportRow(recipe, tag, "mean_entropy", snap.mean_entropy, epoch=snap.epoch)
        )
    return rows


def _run_misalignment(params: dict, seed: int) -> RecipeResult:
    tag = flatten_params(params)
    tasks = generate_tasks(
        int(params["problems"]), int(params["answers"]), 1, derive_seed(seed, "tasks")
    )
    config = trainer.TrainConfig(
        loss=LossSpec.ce(),
        learning_rate=float(params["learning_rate"]),
        epochs=int(params["epochs"]),
        batch_size=int(params["batch_size"]),
        seed=seed,
        label_noise=float(params["label_noise"]),
        eval_ns=tuple(int(n) for n in params["eval_ns"]),
        steps_per_epoch=int(params["steps_per_epoch"]),
    )
    policy = trainer.PolicyTable.uniform(tasks.problem_count, tasks.answer_count)
    _, trajectory = trainer.train(policy, tasks, config)
    rows = _trajectory_rows("misalignment_table", tag, trajectory)
    big_n = max(config.eval_ns)
    pass1 = [snap.coverage[1] for snap in trajectory.snapshots]
    passbig = [snap.coverage[big_n] for snap in trajectory.snapshots]
    metrics = {
        "pass1_non_decreasing": all(b >= a - 1e-12 for a, b in zip(pass1, pass1[1:])),
        f"pass{big_n}_final_below_peak": passbig[-1] < max(passbig[:-1]),
        "pass1_by_epoch": pass1,
        f"pass{big_n}_by_epoch": passbig,
    }
    return RecipeResult(rows, metrics)


# ---------------------------------------------------------------------------
# dco_frontier and overconfidence_hist share one training grid
# ---------------------------------------------------------------------------

_GRID_DEFAULTS = {
    "problems": 48,
    "answers": 512,
    "epochs": 6,
    "learning_rate": 2.0,
    "batch_size": 16,
    "steps_per_epoch": 12,
    "label_noise": 0.3,
    "nprimes": (1, 16, 256),
    "eval_ns": (1, 4, 16, 64, 256),
    "filter_eps": 0.05,
}


def _train_grid(params: dict, seed: int):
    """One trained model per N'; N'=1 is the CE baseline.  Shared tasks/seed."""
    tasks = single_answer_tasks(
        int(params["problems"]), int(params["answers"]), derive_seed(seed, "tasks")
    )
    eval_ns = tuple(int(n) for n in params["eval_ns"])

    def one(nprime: int):
        if nprime == 1:
            spec, filt = LossSpec.ce(), None
        else:
            spec = LossSpec.dco(nprime)
            filt = FilterPolicy(threshold_eps=float(params["filter_eps"]))
        config = trainer.TrainConfig(
            loss=spec,
            learning_rate=float(params["learning_rate"]),
            epochs=int(params["epochs"]),
            batch_size=int(params["batch_size"]),
            filter=filt,
            seed=seed,
            label_noise=float(params["label_noise"]),
            eval_ns=eval_ns,
            steps_per_epoch=int(params["steps_per_epoch"]),
        )
        policy = trainer.PolicyTable.uniform(tasks.problem_count, tasks.answer_count)
        final, trajectory = trainer.train(policy, tasks, config)
        return final, trajectory, trainer.eval_pass_at_n(final, tasks, eval_ns)

    nprimes = tuple(int(n) for n in params["nprimes"])
    results = _map_jobs(one, nprimes)
    return tasks, dict(zip(nprimes, results))


def _run_frontier(params: dict, seed: int) -> RecipeResult:
    tag = flatten_params(params)
    _, grid = _train_grid(params, seed)
    curves = {nprime: curve for nprime, (_, _, curve) in grid.items()}
    rows = []
    for nprime, curve in sorted(curves.items()):
        run_tag = f"{tag};nprime={nprime}"
        for n, cov in curve.entries.items():
            rows.append(ReportRow("dco_frontier", run_tag, "coverage", cov, n=n))
    frontier = trainer.pareto_frontier(curves)
    for n, (best_nprime, value) in sorted(frontier.items()):
        rows.append(ReportRow("dco_frontier", tag, "frontier_value", value, n=n))
        rows.append(
            ReportRow("dco_frontier", tag, "frontier_best_nprime", float(best_nprime), n=n)
        )
    argmaxes = [frontier[n][0] for n in sorted(frontier)]
    big = max(frontier)
    nprimes = sorted(curves)
    metrics = {
        "argmax_non_decreasing": all(b >= a for a, b in zip(argmaxes, argmaxes[1:])),
        "largest_beats_ce_at_max_n": curves[nprimes[-1]][big] > curves[1][big],
        "ce_beats_largest_at_1": curves[1][1] > curves[nprimes[-1]][1],
        "argmax_by_n": {str(n): frontier[n][0] for n in sorted(frontier)},
    }
    return RecipeResult(rows, metrics)


def _run_overconfidence(params: dict, seed: int) -> RecipeResult:
    tag = flatten_params(params)
    _, grid = _train_grid(params, seed)
    rows = []
    means = {}
    for nprime, (_, trajectory, _) in sorted(grid.items()):
        run_tag = f"{tag};nprime={nprime}"
        for snap in trajectory.snapshots:
            rows.append(
                ReportRow(
                    "overconfidence_hist", run_tag, "mean_greedy_confidence",
                    snap.mean_greedy_confidence, epoch=snap.epoch,
                )
            )
        final = trajectory.snapshots[-1]
        counts, edges = final.greedy_hist
        for b, count in enumerate(counts):
            rows.append(
                ReportRow(
                    "overconfidence_hist", f"{run_tag};bin={edges[b]:.2f}",
                    "greedy_hist_count", float(count), epoch=final.epoch,
                )
            )
        means[nprime] = final.mean_greedy_confidence
    ordered = sorted(means)
    metrics = {
        "mean_greedy_confidence": {str(k): v for k, v in means.items()},
        "confidence_strictly_decreasing_in_nprime": all(
            means[a] > means[b] for a, b in zip(ordered, ordered[1:])
        ),
    }
    return RecipeResult(rows, metrics)


# ---------------------------------------------------------------------------
# grpo_compare
# ---------------------------------------------------------------------------

_GRPO_DEFAULTS = {
    "problems": 40,
    "answers": 10,
    "epochs": 6,
    "sweeps_per_epoch": 4,
    "group_size": 8,
    "learning_rate": 4.0,
    "corrupt_fraction": 0.3,
    "eval_n": 64,
}


def _run_grpo_compare(params: dict, seed: int) -> RecipeResult:
    tag = flatten_params(params)
    tasks = single_answer_tasks(
        int(params["problems"]), int(params["answers"]), derive_seed(seed, "tasks")
    )
    training_view = corrupt_labels(
        tasks, float(params["corrupt_fraction"]), derive_seed(seed, "corrupt")
    )
    eval_n = int(params["eval_n"])
    policy = trainer.PolicyTable.uniform(tasks.problem_count, tasks.answer_count)
    rows = []
    confs, covs = [], []
    for epoch in range(1, int(params["epochs"]) + 1):
        for sweep in range(int(params["sweeps_per_epoch"])):
            policy = trainer.grpo_step(
                policy,
                training_view,
                int(params["group_size"]),
                float(params["learning_rate"]),
                derive_seed(seed, "grpo", epoch, sweep),
            )
        conf = float(trainer.greedy_confidences(policy, tasks).mean())
        cov = trainer.eval_pass_at_n(policy, tasks, (1, eval_n))
        confs.append(conf)
        covs.append(cov[eval_n])
        rows.append(ReportRow("grpo_compare", tag, "mean_mode_confidence", conf, epoch=epoch))
        rows.append(ReportRow("grpo_compare", tag, "coverage", cov[1], n=1, epoch=epoch))
        rows.append(ReportRow("grpo_compare", tag, "coverage", cov[eval_n], n=eval_n, epoch=epoch))
    metrics = {
        "mode_confidence_increasing": all(b > a for a, b in zip(confs, confs[1:])),
        f"pass{eval_n}_final_below_peak": covs[-1] < max(covs[:-1]),
        "mode_confidence_by_epoch": confs,
        f"pass{eval_n}_by_epoch": covs,
    }
    return RecipeResult(rows, metrics)


# ---------------------------------------------------------------------------
# tree_ensemble
# ---------------------------------------------------------------------------

_TREE_DEFAULTS = {
    "n_narrow": 5,
    "n_wide": 5,
    "chain_length": 6,
    "branching": 12,
    "n_effs": (1, 4, 8, 16, 32),
    "epochs": 40,
    "learning_rate": 0.5,
    "single_budget": 130,
    "ensemble_budget_per_policy": 26,
}


def _run_tree_ensemble(params: dict, seed: int) -> RecipeResult:
    tag = flatten_params(params)
    env, narrow, wide = prooftree.build_mixed_env(
        int(params["n_narrow"]),
        int(params["n_wide"]),
        int(params["chain_length"]),
        int(params["branching"]),
        derive_seed(seed, "env"),
    )
    theorems = list(narrow) + list(wide)
    max_depth = int(params["chain_length"])
    n_effs = tuple(int(n) for n in params["n_effs"])

    def train_one(n_eff: int):
        policy = prooftree.StepPolicy.uniform(env.state_count, env.branching)
        return prooftree.train_step_policy(
            policy, env, n_eff, int(params["epochs"]), float(params["learning_rate"]),
            derive_seed(seed, "train", n_eff),
        )

    policies = _map_jobs(train_one, n_effs)
    rows = []
    detail_rows = []
    single_scores = {}
    for n_eff, policy in zip(n_effs, policies):
        outcomes = prooftree.search_outcomes(
            policy, env, theorems, int(params["single_budget"]),
            derive_seed(seed, "search", n_eff), max_depth,
        )
        for theorem, (solved, depth) in zip(theorems, outcomes):
            detail_rows.append((theorem, f"n_eff={n_eff}", int(solved), depth))
        fraction = sum(s for s, _ in outcomes) / len(outcomes)
        single_scores[n_eff] = fraction
        run_tag = f"{tag};n_eff={n_eff}"
        rows.append(ReportRow("tree_ensemble", run_tag, "solve_fraction", fraction))
        rows.append(
            ReportRow(
                "tree_ensemble", run_tag, "narrow_solved",
                float(sum(s for (s, _), t in zip(outcomes, theorems) if t in narrow)),
            )
        )
        rows.append(
            ReportRow(
                "tree_ensemble", run_tag, "wide_solved",
                float(sum(s for (s, _), t in zip(outcomes, theorems) if t in wide)),
            )
        )
    ensemble_fraction, attribution = prooftree.ensemble_search(
        policies, env, theorems, int(params["ensemble_budget_per_policy"]),
        derive_seed(seed, "ensemble"), max_depth,
    )
    for pi, n_eff in enumerate(n_effs):
        for ti, theorem in enumerate(theorems):
            detail_rows.append(
                (theorem, f"ensemble:n_eff={n_eff}", int(attribution[pi, ti]), -1)
            )
    rows.append(ReportRow("tree_ensemble", tag, "ensemble_solve_fraction", ensemble_fraction))
    metrics = {
        "single_solve_fractions": {str(k): v for k, v in single_scores.items()},
        "ensemble_solve_fraction": ensemble_fraction,
        "ensemble_at_least_best_single": ensemble_fraction >= max(single_scores.values()),
    }
    tables = {
        "tree_details.csv": (
            ("theorem", "policy", "solved", "depth"),
            detail_rows,
        )
    }
    return RecipeResult(rows, metrics, tables)


# ---------------------------------------------------------------------------
# cot_dcoa
# ---------------------------------------------------------------------------

_COT_DEFAULTS = {
    "problems": 12,
    "traces": 4,
    "answers": 16,
    "epochs": 12,
    "learning_rate": 1.0,
    "batch_size": 4,
    "nprime": 64,
    "k_mc": 64,
    "threshold": 0.01,
}


def _golden_triplets(problems: int, traces: int, answers: int, seed: int):
    rng = derive_rng(seed, "cot-data")
    return [
        cot.CotExample(
            problem=x,
            trace=int(rng.integers(traces)),
            answer=int(rng.integers(answers)),
        )
        for x in range(problems)
    ]


def _run_cot_dcoa(params: dict, seed: int) -> RecipeResult:
    tag = flatten_params(params)
    problems = int(params["problems"])
    traces = int(params["traces"])
    answers = int(params["answers"])
    data = _golden_triplets(problems, traces, answers, derive_seed(seed, "data"))
    rows = []
    drifts = {}
    discard_series = None
    for kind in ("ce", "dcoa"):
        spec = LossSpec.ce() if kind == "ce" else LossSpec.dco(int(params["nprime"]))
        config = cot.CotTrainConfig(
            loss=spec,
            learning_rate=float(params["learning_rate"]),
            epochs=int(params["epochs"]),
            batch_size=int(params["batch_size"]),
            k_mc=int(params["k_mc"]),
            threshold=float(params["threshold"]),
            seed=seed,
        )
        policy = cot.CotPolicy.uniform(problems, traces, answers)
        _, trajectory = cot.train_cot(policy, data, config)
        run_tag = f"{tag};loss={kind}"
        for snap in trajectory.snapshots:
            rows.append(
                ReportRow(
                    "cot_dcoa", run_tag, "mean_mode_confidence",
                    snap.mean_mode_confidence, epoch=snap.epoch,
                )
            )
            rows.append(
                ReportRow("cot_dcoa", run_tag, "discarded", float(snap.discarded), epoch=snap.epoch)
            )
        series = trajectory.mean_mode_confidences
        drifts[kind] = series[-1] - series[0]
        if kind == "dcoa":
            discard_series = trajectory.discard_counts
    metrics = {
        "ce_drift": drifts["ce"],
        "dcoa_drift": drifts["dcoa"],
        "dcoa_drift_below_ce": drifts["dcoa"] < drifts["ce"],
        "dcoa_discards_by_epoch": [int(d) for d in discard_series],
    }
    return RecipeResult(rows, metrics)


# ---------------------------------------------------------------------------
# jvp_probe
# ---------------------------------------------------------------------------

_JVP_DEFAULTS = {
    "problems_per_level": 24,
    "answers": 512,
    "epochs": 6,
    "learning_rate": 2.0,
    "batch_size": 16,
    "steps_per_epoch": 12,
    "noisy_fraction": 0.3,
    "probe_n": 256,
}


def _jvp_tasks_and_noise(params: dict, seed: int):
    per_level = int(params["problems_per_level"])
    answers = int(params["answers"])
    total = 2 * per_level
    difficulty = np.array([1] * per_level + [2] * per_level, dtype=np.int64)
    weight = np.where(difficulty == 1, 2.0, 1.0)
    tasks = single_answer_tasks(
        total, answers, derive_seed(seed, "tasks"),
        difficulty=difficulty, sampling_weight=weight,
    )
    # Noise concentrated in the oversampled easy level: those are the
    # problems the model exploits fastest.
    rng = derive_rng(seed, "jvp-noise")
    n_noisy = round(float(params["noisy_fraction"]) * per_level)
    noisy = tuple(sorted(rng.permutation(per_level)[:n_noisy].tolist()))
    return tasks, noisy


def _probe_pairs(tasks, decoys, level: int):
    pairs = []
    for i in range(tasks.problem_count):
        if tasks.difficulty[i] != level:
            continue
        target = int(decoys[i]) if decoys[i] >= 0 else tasks.correct[i][0]
        pairs.append((i, target))
    return pairs


def _run_jvp_probe(params: dict, seed: int) -> RecipeResult:
    tag = flatten_params(params)
    tasks, noisy = _jvp_tasks_and_noise(params, seed)
    probe_n = int(params["probe_n"])
    config = trainer.TrainConfig(
        loss=LossSpec.ce(),
        learning_rate=float(params["learning_rate"]),
        epochs=int(params["epochs"]),
        batch_size=int(params["batch_size"]),
        seed=seed,
        noisy_problems=noisy,
        eval_ns=(1, probe_n),
        steps_per_epoch=int(params["steps_per_epoch"]),
    )
    decoys = trainer.noisy_problem_decoys(tasks, config)
    policy = trainer.PolicyTable.uniform(tasks.problem_count, tasks.answer_count)
    early_config = trainer.TrainConfig(
        loss=config.loss, learning_rate=config.learning_rate, epochs=1,
        batch_size=config.batch_size, seed=seed, noisy_problems=noisy,
        eval_ns=config.eval_ns, steps_per_epoch=1,
    )
    early_policy, _ = trainer.train(policy, tasks, early_config)
    late_policy, _ = trainer.train(policy, tasks, config)
    rows = []
    values = {}
    for stage, staged_policy in (("early", early_policy), ("late", late_policy)):
        for level in (1, 2):
            probe = _probe_pairs(tasks, decoys, level)
            value = trainer.directional_derivative(staged_policy, probe, tasks, probe_n)
            values[(stage, level)] = value
            rows.append(
                ReportRow(
                    "jvp_probe", f"{tag};stage={stage};level={level}",
                    "directional_derivative", value,
                )
            )
    metrics = {
        "early_level1": values[("early", 1)],
        "early_level2": values[("early", 2)],
        "late_level1": values[("late", 1)],
        "late_level2": values[("late", 2)],
        "early_all_negative": values[("early", 1)] < 0 and values[("early", 2)] < 0,
        "late_easy_flips_positive": values[("late", 1)] > 0,
    }
    return RecipeResult(rows, metrics)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Recipe:
    name: str
    description: str
    defaults: dict
    fn: object


_ALL_RECIPES = [
    _Recipe(
        "bounds_sweep",
        "Upper/lower bounds on optimal max confidence versus budget N "
        "(bound-curve figure).",
        _BOUNDS_DEFAULTS,
        _run_bounds_sweep,
    ),
    _Recipe(
        "cot_dcoa",
        "Chain-of-thought training with Monte-Carlo marginal filtering versus "
        "CE: mode-confidence drift and discard counts (marginal-filter comparison).",
        _COT_DEFAULTS,
        _run_cot_dcoa,
    ),
    _Recipe(
        "dco_frontier",
        "Coverage-versus-budget curves for models trained at several N'; their "
        "pointwise max traces the frontier (frontier figure).",
        _GRID_DEFAULTS,
        _run_frontier,
    ),
    _Recipe(
        "grpo_compare",
        "Group-relative policy-gradient training under a corrupted reward view: "
        "mode confidence rises while large-N coverage fades (policy-gradient comparison).",
        _GRPO_DEFAULTS,
        _run_grpo_compare,
    ),
    _Recipe(
        "jvp_probe",
        "Directional derivative of the pass@N test loss along CE batch directions, "
        "by difficulty level, early versus late in training (data-difficulty probe).",
        _JVP_DEFAULTS,
        _run_jvp_probe,
    ),
    _Recipe(
        "misalignment_table",
        "CE training epochs versus pass@N: pass@1 keeps rising while large-N "
        "coverage peaks early and falls (misalignment table).",
        _MISALIGNMENT_DEFAULTS,
        _run_misalignment,
    ),
    _Recipe(
        "overconfidence_hist",
        "Greedy-confidence histograms and means across training for CE versus "
        "coverage losses (overconfidence histograms).",
        _GRID_DEFAULTS,
        _run_overconfidence,
    ),
    _Recipe(
        "tree_ensemble",
        "Tactic-tree search with step-regularized policies at several N_eff plus "
        "their ensemble at matched budget (search-ensemble table).",
        _TREE_DEFAULTS,
        _run_tree_ensemble,
    ),
]

RECIPES = {recipe.name: recipe for recipe in sorted(_ALL_RECIPES, key=lambda r: r.name)}


def list_recipes():
    """(name, description) pairs in stable (sorted) order."""
    return [(name, RECIPES[name].description) for name in RECIPES]


def run_recipe(name: str, params: dict, seed: int) -> tuple:
    """Run a registered recipe; returns (RecipeResult, merged params)."""
    if name not in RECIPES:
        raise DomainError(f"unknown recipe {name!r}; see list_recipes()")
    recipe = RECIPES[name]
    merged = _merge_params(recipe.defaults, params or {})
    return recipe.fn(merged, int(seed)), merged
