"""Suite runner: fans episodes out, aggregates success rates, writes tables and traces."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Callable

from .controller import ControllerConfig, EpisodeRecord, LoopMode, run_episode
from .env import EnvSession, TaskInstance, TaskType, generate_task
from .fixtures import ablation_queues, skill_queues
from .llm import Gateway, RemoteBackend, ScriptedBackend, Transcript
from .llm.backends import DEFAULT_FIXTURE_DIR
from .plan import parse_plan
from .skills import ExemplarPolicy, SkillStatus, SkillStore, acquire, filter_skill, retrieve

log = logging.getLogger(__name__)

COLUMNS = [t for t in TaskType]
SEED_STRIDE = 1000  # seeds for counted manifest entries: global_seed * stride + i
DASH = "—"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    task_type: TaskType
    seed: int


def expand_manifest(items: list[dict], global_seed: int = 0) -> list[ManifestEntry]:
    entries = []
    for i, item in enumerate(items):
        try:
            tt = TaskType.parse(str(item["task_type"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"manifest entry {i}: {exc}") from None
        if "seed" in item:
            entries.append(ManifestEntry(tt, int(item["seed"])))
        elif "count" in item:
            base = global_seed * SEED_STRIDE + int(item.get("offset", 0))
            entries.extend(ManifestEntry(tt, base + k) for k in range(int(item["count"])))
        else:
            raise ConfigError(f"manifest entry {i}: needs 'seed' or 'count'")
    return entries


@dataclass
class BackendConfig:
    kind: str = "ablation"  # ablation | skills | scripted | remote
    fixtures: str | None = None
    strict: bool = True
    base_url: str | None = None
    model: str | None = None
    timeout: float = 30.0
    max_retries: int = 2

    def __post_init__(self):
        if self.kind not in ("ablation", "skills", "scripted", "remote"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "scripted" and not self.fixtures:
            raise ConfigError("scripted backend needs a 'fixtures' directory")


@dataclass
class SkillConfig:
    store: str | None = None
    rounds: int = 0
    acquire: list[ManifestEntry] = field(default_factory=list)
    filter: list[ManifestEntry] = field(default_factory=list)
    acquire_backend: BackendConfig = field(default_factory=BackendConfig)


@dataclass
class SuiteConfig:
    manifest: list[ManifestEntry]
    modes: list[LoopMode] = field(default_factory=lambda: [LoopMode.EXPLICIT])
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    skills: SkillConfig = field(default_factory=SkillConfig)
    out: str | None = None
    seed: int = 0
    workers: int = 4

    def __post_init__(self):
        if not self.manifest:
            raise ConfigError("the task manifest is empty")
        if not self.modes:
            raise ConfigError("no loop mode selected")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path | None = None) -> "SuiteConfig":
        base = Path(base_dir) if base_dir else None

        def path(p):
            if p is None or base is None or Path(p).is_absolute():
                return p
            return str(base / p)

        seed = int(data.get("seed", 0))
        try:
            ctrl = ControllerConfig(**data.get("controller", {}))
            bdata = dict(data.get("backend", {}))
            if "fixtures" in bdata:
                bdata["fixtures"] = path(bdata["fixtures"])
            backend = BackendConfig(**bdata)
            sdata = data.get("skills", {})
            skills = SkillConfig(
                store=path(sdata.get("store")),
                rounds=int(sdata.get("rounds", 0)),
                acquire=expand_manifest(sdata.get("acquire", []), seed),
                filter=expand_manifest(sdata.get("filter", []), seed),
                acquire_backend=BackendConfig(**sdata.get("acquire_backend", {"kind": "ablation"})),
            )
            modes = [LoopMode(m) for m in data.get("modes", [ctrl.mode.value])]
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(
            manifest=expand_manifest(data.get("manifest", []), seed),
            modes=modes,
            controller=ctrl,
            backend=backend,
            skills=skills,
            out=path(data.get("out")),
            seed=seed,
            workers=int(data.get("workers", 4)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SuiteConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data, Path(path).parent)


# -- results -----------------------------------------------------------------


def percent(rate: Fraction | None) -> str:
    if rate is None:
        return DASH
    value = Decimal(rate.numerator) * 100 / Decimal(rate.denominator)
    return str(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass
class SuiteResult:
    mode: LoopMode
    episodes: list[EpisodeRecord]
    max_rounds: int
    transcripts: dict[str, list] = field(default_factory=dict, repr=False)

    @property
    def total(self) -> int:
        return len(self.episodes)

    @property
    def successes(self) -> int:
        return sum(e.success for e in self.episodes)

    @property
    def success_rate(self) -> Fraction:
        return Fraction(self.successes, self.total) if self.total else Fraction(0)

    def type_rate(self, task_type: TaskType) -> Fraction | None:
        eps = [e for e in self.episodes if e.task.task_type is task_type]
        return Fraction(sum(e.success for e in eps), len(eps)) if eps else None

    def _mean(self, attr: str) -> Fraction:
        return Fraction(sum(getattr(e, attr) for e in self.episodes), self.total) if self.total else Fraction(0)

    @property
    def mean_llm_calls(self) -> Fraction:
        return self._mean("llm_calls")

    @property
    def mean_env_actions(self) -> Fraction:
        return self._mean("env_actions")

    @property
    def mean_refinement_rounds(self) -> Fraction:
        return self._mean("refinement_rounds")

    def curve(self) -> list[Fraction]:
        """Success rate under round budgets 0..max_rounds, from recorded episodes."""
        rates = []
        for budget in range(self.max_rounds + 1):
            wins = sum(1 for e in self.episodes if e.success_round is not None and e.success_round <= budget)
            rates.append(Fraction(wins, self.total) if self.total else Fraction(0))
        return rates

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "total": self.total,
            "successes": self.successes,
            "success_rate": str(self.success_rate),
            "per_type": {t.label: (str(r) if (r := self.type_rate(t)) is not None else None) for t in COLUMNS},
            "mean_llm_calls": str(self.mean_llm_calls),
            "mean_env_actions": str(self.mean_env_actions),
            "mean_refinement_rounds": str(self.mean_refinement_rounds),
            "curve": [str(r) for r in self.curve()],
            "episodes": [
                {k: v for k, v in e.to_dict().items() if k not in ("steps", "rounds", "task")} for e in self.episodes
            ],
        }


def report(results, fmt: str = "text") -> str:
    """Success-rate table: one row per mode, a column per task type plus All."""
    if isinstance(results, SuiteResult):
        results = [results]
    header = ["Mode"] + [t.label for t in COLUMNS] + ["All"]
    rows = [[r.mode.value] + [percent(r.type_rate(t)) for t in COLUMNS] + [percent(r.success_rate if r.total else None)] for r in results]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    lines = []
    for n, row in enumerate([header] + rows):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def curve_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["mode", "rounds", "success_rate"])
    for r in results:
        for budget, rate in enumerate(r.curve()):
            writer.writerow([r.mode.value, budget, percent(rate)])
    return buf.getvalue()


# -- running -----------------------------------------------------------------


def make_backend(bcfg: BackendConfig, task: TaskInstance, state, shared: dict):
    if bcfg.kind == "ablation":
        return ScriptedBackend(ablation_queues(task, state), strict=bcfg.strict)
    if bcfg.kind == "skills":
        return ScriptedBackend(skill_queues(task, state), strict=bcfg.strict)
    if bcfg.kind == "scripted":
        return ScriptedBackend.from_dir(bcfg.fixtures, task.task_id, strict=bcfg.strict)
    if "remote" not in shared:
        overrides = {k: v for k, v in (("base_url", bcfg.base_url), ("model", bcfg.model)) if v}
        shared["remote"] = RemoteBackend.from_env(timeout=bcfg.timeout, **overrides)
    return shared["remote"]


ExemplarFn = Callable[[TaskInstance], list[str]]


def run_episodes(
    entries: list[ManifestEntry],
    ccfg: ControllerConfig,
    bcfg: BackendConfig,
    exemplars: ExemplarFn,
    workers: int = 4,
    transcript: Transcript | None = None,
) -> list[EpisodeRecord]:
    """Run every entry independently; results come back sorted by task id."""
    transcript = transcript if transcript is not None else Transcript()
    shared: dict = {}

    def one(entry: ManifestEntry) -> EpisodeRecord:
        task, state, obs = generate_task(entry.task_type, entry.seed)
        backend = make_backend(bcfg, task, state, shared)
        gateway = Gateway(backend, transcript=transcript, episode=task.task_id, max_retries=bcfg.max_retries)
        return run_episode(ccfg, EnvSession(task, state, obs), gateway, exemplars(task))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(one, entries))
    return sorted(records, key=lambda r: r.task.task_id)


def run_mode(config: SuiteConfig, mode: LoopMode, store: SkillStore | None = None) -> SuiteResult:
    ccfg = replace(config.controller, mode=mode)
    policy = ExemplarPolicy(use_skills=config.controller.use_skills, use_expert_samples=config.controller.use_expert_samples)
    transcript = Transcript()
    episodes = run_episodes(
        config.manifest, ccfg, config.backend, lambda task: retrieve(store, task, policy), config.workers, transcript
    )
    exchanges: dict[str, list] = {}
    for rec in transcript.records:
        exchanges.setdefault(rec.episode, []).append(rec)
    rounds = ccfg.max_refinement_rounds if mode is LoopMode.EXPLICIT else 0
    return SuiteResult(mode, episodes, rounds, exchanges)


def discover_skills(config: SuiteConfig, store: SkillStore | None = None) -> SkillStore:
    """Alternate acquisition and filtering for ``config.skills.rounds`` rounds."""
    store = store if store is not None else SkillStore()
    sk = config.skills
    ccfg = replace(config.controller, mode=LoopMode.EXPLICIT)
    zero_shot = ExemplarPolicy(use_skills=True, use_expert_samples=False)
    for _ in range(sk.rounds):
        episodes = run_episodes(
            sk.acquire, ccfg, sk.acquire_backend, lambda task: retrieve(store, task, zero_shot), config.workers
        )
        for candidate in acquire(episodes):
            eval_entries = [
                e for e in sk.filter
                if e.task_type.value == candidate.signature.split(":")[0] and e.seed != candidate.seed
            ]
            eval_tasks = [generate_task(e.task_type, e.seed)[0] for e in eval_entries]
            if not eval_tasks:
                log.warning("no evaluation tasks for %s; candidate dropped", candidate.signature)
                continue

            def run(tasks, exemplar_fn, entries=eval_entries):
                recs = run_episodes(entries, ccfg, config.backend, exemplar_fn, config.workers)
                return [r.success for r in recs]

            store.add(filter_skill(candidate, eval_tasks, run))
    return store


def trace_lines(result: SuiteResult) -> list[str]:
    lines = []
    for ep in result.episodes:
        data = ep.to_dict()
        data["exchanges"] = [
            {"kind": r.kind, "attempt": r.attempt, "status": r.status, "prompt": r.prompt, "response": r.response}
            for r in result.transcripts.get(ep.task.task_id, [])
        ]
        lines.append(json.dumps(data, sort_keys=True))
    return lines


def write_outputs(results: list[SuiteResult], out: str | Path) -> None:
    out = Path(out)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    for r in results:
        header = json.dumps({"generated_at": stamp, "mode": r.mode.value})
        body = "\n".join([header] + trace_lines(r)) + "\n"
        (out / "traces" / f"{r.mode.value}.jsonl").write_text(body, encoding="utf-8")
    (out / "results.csv").write_text(report(results, "csv"), encoding="utf-8")
    (out / "results.txt").write_text(report(results, "text"), encoding="utf-8")
    (out / "curve.csv").write_text(curve_csv(results), encoding="utf-8")
    summary = {"modes": [r.to_dict() for r in results]}
    (out / "results.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def check_fixture_coverage(config: SuiteConfig) -> None:
    """Every task must have an initial plan scripted, else no episode can start."""
    bcfg = config.backend
    if bcfg.kind != "scripted":
        return
    root = Path(bcfg.fixtures)
    if not root.is_dir():
        raise ConfigError(f"fixture directory {root} does not exist")
    fallback = root / DEFAULT_FIXTURE_DIR
    for entry in config.manifest:
        task, _, _ = generate_task(entry.task_type, entry.seed)
        folders = (root / task.task_id, fallback)
        if not any((f / name).is_file() for f in folders for name in ("initial_planning.txt", "initial_planning.json")):
            raise ConfigError(f"no initial_planning fixture for {task.task_id} under {root}")


def run_suite(config: SuiteConfig) -> list[SuiteResult]:
    """Run every configured mode; skill discovery first when rounds > 0."""
    check_fixture_coverage(config)
    store = None
    if config.skills.store and Path(config.skills.store).exists():
        store = SkillStore.load(config.skills.store)
    if config.skills.rounds > 0:
        store = discover_skills(config, store)
        if config.skills.store:
            store.persist(config.skills.store)
    results = [run_mode(config, mode, store) for mode in config.modes]
    if config.out:
        write_outputs(results, config.out)
    return results


def load_trace(path: str | Path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path} is empty")
    return json.loads(lines[0]), [json.loads(line) for line in lines[1:] if line.strip()]


@dataclass
class TracedEpisode:
    """Just enough of an EpisodeRecord, rebuilt from a trace, for skill acquisition."""

    task: TaskInstance
    success: bool
    env_actions: int
    final_plan: object


def episodes_from_trace(path: str | Path) -> list[TracedEpisode]:
    _, records = load_trace(path)
    out = []
    for rec in records:
        t = rec["task"]
        task = TaskInstance(TaskType(t["task_type"]), t["target_object_class"], t["target_receptacle"], t["seed"], t["goal_text"])
        plan = parse_plan(rec["rounds"][-1]["plan_text"]) if rec["rounds"] else None
        out.append(TracedEpisode(task, rec["status"] == "success", rec["env_actions"], plan))
    return out


def render_replay(record: dict) -> str:
    lines = [f"== {record['task_id']} [{record['mode']}] {record['task']['goal_text']}"]
    for rnd in record["rounds"]:
        lines.append(f"-- round {rnd['round']} from step {rnd['start_from']}: {rnd['status']} ({rnd['actions']} actions)")
        for step in record["steps"]:
            if step["round"] == rnd["round"]:
                tag = " (substitute)" if step.get("substitute") else ""
                lines.append(f"  [{step['subgoal']}] > {step['action']}{tag}")
                lines.append(f"      {step['observation']}")
        if rnd.get("report"):
            lines.extend("  ! " + ln for ln in rnd["report"].splitlines())
    lines.append(
        f"== {record['status']}: {record['refinement_rounds']} refinement(s), "
        f"{record['llm_calls']} model calls, {record['env_actions']} actions"
    )
    return "\n".join(lines)


def archived_count(store: SkillStore) -> int:
    return sum(r.status is SkillStatus.ARCHIVED for r in store.records)
