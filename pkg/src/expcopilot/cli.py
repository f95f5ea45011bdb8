"""Command surface: ingest history, elicit knowledge, suggest solutions, run evals.

All randomness flows from one root seed through named sub-streams, so every
command is byte-deterministic given its config and a scripted or replay
backend. Secrets come from the environment only.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import click

from . import bench, storage
from .core import CanonicalExperience, best_solutions, check_direction, derive_seed
from .elicitation import ElicitationConfig, elicit_knowledge
from .errors import ConfigError, ExpCopilotError, GatewayError, ParseError
from .gateway import backend_from_config, embed_batch, prompt_sha256
from .retrieval import PoolEntry
from .suggestion import SuggestionConfig, suggest


@dataclass
class AppConfig:
    seed: int = 0
    direction: str = "higher"
    backend: dict = field(default_factory=lambda: {"kind": "scripted"})
    paths: dict = field(default_factory=dict)
    suggestion: SuggestionConfig = field(default_factory=SuggestionConfig)
    elicitation: ElicitationConfig = field(default_factory=ElicitationConfig)
    eval: dict = field(default_factory=dict)


def load_config(path: str | None) -> AppConfig:
    raw = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        sug_raw = dict(raw.get("suggestion", {}))
        if "stop_sequences" in sug_raw and sug_raw["stop_sequences"] is not None:
            sug_raw["stop_sequences"] = tuple(sug_raw["stop_sequences"])
        eli_raw = dict(raw.get("elicitation", {}))
        if "questions" in eli_raw:
            eli_raw["questions"] = tuple(eli_raw["questions"])
        cfg = AppConfig(
            seed=int(raw.get("seed", 0)),
            direction=check_direction(raw.get("direction", "higher")),
            backend=dict(raw.get("backend", {"kind": "scripted"})),
            paths=dict(raw.get("paths", {})),
            suggestion=SuggestionConfig(**sug_raw),
            elicitation=ElicitationConfig(**eli_raw),
            eval=dict(raw.get("eval", {})),
        )
    except TypeError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    return cfg


def _build_entries(tasks, pool, embeddings, direction: str, per_task: int = 3) -> list[PoolEntry]:
    """Assemble retrieval pool entries: each task with its best canonical experiences."""
    by_task: dict[str, list[CanonicalExperience]] = {}
    for exp in pool:
        by_task.setdefault(exp.task_id, []).append(exp)
    sign = -1.0 if direction == "higher" else 1.0
    entries = []
    for task in tasks:
        experiences = by_task.get(task.task_id)
        if not experiences:
            continue
        ranked = sorted(enumerate(experiences), key=lambda item: (sign * item[1].metric, item[0]))
        if task.task_id not in embeddings:
            raise ConfigError(f"no cached embedding for task '{task.task_id}'")
        entries.append(
            PoolEntry(
                task=task,
                embedding=embeddings[task.task_id],
                experiences=tuple(exp for _, exp in ranked[:per_task]),
            )
        )
    return entries


def cmd_ingest(cfg: AppConfig, history_paths, space_path, tasks_path, out_dir) -> None:
    """Canonicalize history into a pool directory with discretizers and embeddings."""
    space = storage.load_space(space_path)
    tasks = storage.load_tasks(tasks_path)
    by_id = {t.task_id: t for t in tasks}
    records = storage.load_history(history_paths, by_id, space)
    if not records:
        raise ConfigError("history is empty: nothing to ingest")

    fitting: dict[str, list[float]] = {}
    for task_id in sorted({r.task.task_id for r in records}):
        for record in best_solutions(records, task_id, 3, cfg.direction):
            for p in space.parameters:
                if p.kind == "numeric":
                    fitting.setdefault(p.name, []).append(float(record.solution.values[p.name]))
    from .core import canonicalize, fit_discretizer

    discretizers = {
        p.name: fit_discretizer(fitting[p.name], p)
        for p in space.parameters
        if p.kind == "numeric"
    }
    experiences = [canonicalize(r, space, discretizers) for r in records]

    backend = backend_from_config(cfg.backend)
    vectors = embed_batch(backend, [t.description for t in tasks])
    embeddings = [(t.task_id, vec) for t, vec in zip(tasks, vectors)]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    storage.save_space(space, out / "space.json")
    storage.save_tasks(tasks, out / "tasks.jsonl")
    storage.save_pool(experiences, out / "pool.jsonl")
    storage.save_discretizers(discretizers, out / "discretizers.json")
    storage.save_embeddings(embeddings, out / "embeddings.jsonl")


def _load_pool_dir(pool_dir, space_path=None):
    pool_dir = Path(pool_dir)
    space = storage.load_space(space_path or pool_dir / "space.json")
    tasks = storage.load_tasks(pool_dir / "tasks.jsonl")
    pool = storage.load_pool(pool_dir / "pool.jsonl")
    discretizers = storage.load_discretizers(pool_dir / "discretizers.json")
    embeddings = storage.load_embeddings(pool_dir / "embeddings.jsonl")
    return space, tasks, pool, discretizers, embeddings


def _save_trace(trace, path) -> None:
    storage.write_jsonl(
        path,
        (
            {
                "round": r.round,
                "question": r.question,
                "temperature": r.temperature,
                "prompt_sha256": prompt_sha256(r.prompt),
                "candidate": r.candidate,
                "score": r.score,
                "improved": r.improved,
                "stagnation": r.stagnation,
                "error": r.error,
            }
            for r in trace
        ),
    )


def cmd_elicit(cfg: AppConfig, pool_dir, benchmark_dir, out_knowledge, out_trace) -> None:
    """Elicit one validated knowledge item for the pool's solution space."""
    space, tasks, pool, discretizers, embeddings = _load_pool_dir(pool_dir)
    benchmark = bench.load_benchmark(benchmark_dir)
    entries = _build_entries(tasks, pool, embeddings, cfg.direction, cfg.suggestion.demos_per_task)
    backend = backend_from_config(cfg.backend)
    e_cfg = replace(cfg.elicitation, seed=derive_seed(cfg.seed, "elicit"))
    best, trace = elicit_knowledge(
        entries, space, benchmark, e_cfg, backend,
        suggestion_config=cfg.suggestion, discretizers=discretizers,
    )
    storage.save_knowledge([best], out_knowledge)
    if out_trace:
        _save_trace(trace, out_trace)


def _embed_tag(backend) -> str | None:
    return getattr(backend, "embed_model_tag", None) or getattr(backend, "embed_model", None)


def cmd_suggest(
    cfg: AppConfig, task_file, pool_dir, knowledge_path, show_prompt: bool, space_path=None
) -> list[dict]:
    """Suggest configurations for the task described in task_file; returns JSON rows."""
    space, tasks, pool, discretizers, embeddings = _load_pool_dir(pool_dir, space_path)
    with open(task_file, encoding="utf-8") as fh:
        task = storage.task_from_dict(json.load(fh))
    backend = backend_from_config(cfg.backend)
    # The cache is only valid for the backend's embedding model.
    expected_tag = _embed_tag(backend)
    if expected_tag and any(vec.model_tag != expected_tag for vec in embeddings.values()):
        vectors = embed_batch(backend, [t.description for t in tasks])
        embeddings = {t.task_id: vec for t, vec in zip(tasks, vectors)}
    entries = _build_entries(tasks, pool, embeddings, cfg.direction, cfg.suggestion.demos_per_task)
    knowledge = storage.load_knowledge(knowledge_path) if knowledge_path else []
    result = suggest(
        task, entries, knowledge, space, discretizers, cfg.suggestion, backend,
        exclude={task.task_id},
    )
    if show_prompt:
        click.echo(result.prompt, err=True)
    rows = [
        {"task_id": task.task_id, "rank": i, "values": dict(solution.values), "discrete": dict(discrete)}
        for i, (discrete, solution) in enumerate(result.items, start=1)
    ]
    for row in rows:
        click.echo(storage.dumps(row))
    return rows


def cmd_eval(cfg: AppConfig, benchmark_dir, methods, seeds, out_csv, out_json) -> None:
    """Run the leave-one-out sweep for each method and write CSV + JSON reports."""
    benchmark = bench.load_benchmark(benchmark_dir)
    backend = backend_from_config(cfg.backend)
    eval_cfg = bench.EvalConfig(
        suggestion=cfg.suggestion,
        elicitation=cfg.elicitation,
        use_knowledge=bool(cfg.eval.get("use_knowledge", False)),
    )
    reports = [
        bench.run_loo_eval(benchmark, method, seeds, eval_cfg, backend=backend)
        for method in methods
    ]
    bench.write_report_csv(reports, out_csv)
    bench.write_report_json(reports, out_json)


def _exit_on_error(fn):
    try:
        fn()
    except ParseError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(4)
    except GatewayError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    except ExpCopilotError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


@click.group()
def main():
    """Experience-driven configuration suggestions for ML tasks."""


@main.command("ingest")
@click.option("--config", "config_path", default=None, help="JSON config file.")
@click.option("--history", "history_paths", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--space", "space_path", required=True, type=click.Path(exists=True))
@click.option("--tasks", "tasks_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--direction", default=None, type=click.Choice(["higher", "lower"]))
def ingest_command(config_path, history_paths, space_path, tasks_path, out_dir, direction):
    """Canonicalize history files into a persisted experience pool."""
    def run():
        cfg = load_config(config_path)
        if direction:
            cfg.direction = direction
        cmd_ingest(cfg, list(history_paths), space_path, tasks_path, out_dir)
    _exit_on_error(run)


@main.command("elicit")
@click.option("--config", "config_path", default=None)
@click.option("--pool", "pool_dir", required=True, type=click.Path(exists=True))
@click.option("--benchmark", "benchmark_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_knowledge", required=True, type=click.Path())
@click.option("--trace", "out_trace", default=None, type=click.Path())
@click.option("--seed", default=None, type=int)
def elicit_command(config_path, pool_dir, benchmark_dir, out_knowledge, out_trace, seed):
    """Elicit validated knowledge from the experience pool."""
    def run():
        cfg = load_config(config_path)
        if seed is not None:
            cfg.seed = seed
        cmd_elicit(cfg, pool_dir, benchmark_dir, out_knowledge, out_trace)
    _exit_on_error(run)


@main.command("suggest")
@click.option("--config", "config_path", default=None)
@click.option("--task-file", required=True, type=click.Path(exists=True))
@click.option("--pool", "pool_dir", required=True, type=click.Path(exists=True))
@click.option("--space", "space_path", default=None, type=click.Path(exists=True),
              help="Override the pool's space file.")
@click.option("--knowledge", "knowledge_path", default=None, type=click.Path(exists=True))
@click.option("--n", "n_suggestions", default=None, type=int)
@click.option("--budget", default=None, type=int)
@click.option("--backend", "backend_kind", default=None, type=click.Choice(["http", "scripted", "replay"]))
@click.option("--cassette", default=None, type=click.Path())
@click.option("--show-prompt", is_flag=True, default=False)
def suggest_command(
    config_path, task_file, pool_dir, space_path, knowledge_path, n_suggestions,
    budget, backend_kind, cassette, show_prompt,
):
    """Suggest configurations for a new task; prints JSON Lines on stdout."""
    def run():
        cfg = load_config(config_path)
        if n_suggestions is not None:
            cfg.suggestion = replace(cfg.suggestion, n_suggestions=n_suggestions)
        if budget is not None:
            cfg.suggestion = replace(cfg.suggestion, token_budget=budget)
        if backend_kind is not None:
            cfg.backend = {"kind": backend_kind}
            if cassette:
                cfg.backend["cassette"] = cassette
            if backend_kind == "http":
                cfg.backend.update(cfg.paths.get("http", {}))
        cmd_suggest(cfg, task_file, pool_dir, knowledge_path, show_prompt, space_path)
    _exit_on_error(run)


@main.command("eval")
@click.option("--config", "config_path", default=None)
@click.option("--benchmark", "benchmark_dir", required=True, type=click.Path(exists=True))
@click.option("--methods", default="random,constant,nearest,copilot")
@click.option("--seeds", default="0,1,2,3,4")
@click.option("--out-csv", default="report.csv", type=click.Path())
@click.option("--out-json", default="report.json", type=click.Path())
def eval_command(config_path, benchmark_dir, methods, seeds, out_csv, out_json):
    """Leave-one-out evaluation of the configured methods."""
    def run():
        cfg = load_config(config_path)
        method_list = [m.strip() for m in methods.split(",") if m.strip()]
        seed_list = [int(s) for s in seeds.split(",") if s.strip()]
        cmd_eval(cfg, benchmark_dir, method_list, seed_list, out_csv, out_json)
    _exit_on_error(run)


if __name__ == "__main__":
    main()
