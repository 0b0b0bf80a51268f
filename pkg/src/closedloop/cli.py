"""Command-line front end."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .controller import ControllerConfig, LoopMode, run_episode
from .env import HOUSEHOLD_CATALOG, TaskType, generate_task
from .fixtures import FAULT_CYCLE, write_ablation_fixtures
from .harness import (
    BackendConfig,
    ConfigError,
    SuiteConfig,
    discover_skills,
    episodes_from_trace,
    expand_manifest,
    load_trace,
    render_replay,
    report,
    run_episodes,
    run_suite,
)
from .llm import Gateway, ScriptedBackend
from .plan import ParseError, extract_code, has_errors, parse_plan, render_diagnostics, validate_plan
from .scenarios import lettuce_queues, lettuce_session
from .skills import SkillStatus, SkillStore, acquire, filter_skill

log = logging.getLogger("closedloop")


def _apply_overrides(config: SuiteConfig, args) -> SuiteConfig:
    ctrl = config.controller
    if args.rounds is not None:
        ctrl = replace(ctrl, max_refinement_rounds=args.rounds)
    if args.cap is not None:
        ctrl = replace(ctrl, action_cap=args.cap)
    backend = config.backend
    if args.backend:
        if args.backend in ("ablation", "skills", "remote"):
            backend = replace(backend, kind=args.backend, fixtures=None)
        else:
            backend = BackendConfig(kind="scripted", fixtures=args.backend, strict=backend.strict)
    manifest = config.manifest
    seed = config.seed
    if args.seed is not None and args.seed != config.seed:
        seed = args.seed
        manifest = expand_manifest(_raw_manifest(args.config), seed)
    return replace(
        config,
        controller=ctrl,
        backend=backend,
        modes=[LoopMode(m) for m in args.mode] if args.mode else config.modes,
        out=args.out or config.out,
        seed=seed,
        manifest=manifest,
    )


def _raw_manifest(path: str) -> list[dict]:
    return json.loads(Path(path).read_text(encoding="utf-8")).get("manifest", [])


def cmd_run(args) -> int:
    config = _apply_overrides(SuiteConfig.load(args.config), args)
    results = run_suite(config)
    print(report(results, "text"), end="")
    for r in results:
        curve = ", ".join(f"{float(x) * 100:.2f}" for x in r.curve())
        print(f"{r.mode.value}: curve by round budget [{curve}]")
    if config.out:
        print(f"wrote results to {config.out}")
    return 0


def cmd_report(args) -> int:
    data = json.loads(Path(args.results).read_text(encoding="utf-8"))
    if args.format == "json":
        print(json.dumps(data, indent=2))
        return 0
    text_path = Path(args.results).with_name("results.txt" if args.format == "text" else "results.csv")
    print(text_path.read_text(encoding="utf-8"), end="")
    return 0


def cmd_replay(args) -> int:
    header, records = load_trace(args.trace)
    shown = 0
    for rec in records:
        if args.task and rec["task_id"] != args.task:
            continue
        print(render_replay(rec))
        shown += 1
    if not shown:
        print("no matching episodes", file=sys.stderr)
        return 1
    return 0


def cmd_check(args) -> int:
    text = Path(args.plan).read_text(encoding="utf-8")
    try:
        ast = parse_plan(extract_code(text))
    except ParseError as exc:
        print(f"{args.plan}: {exc}")
        return 1
    diags = validate_plan(ast, HOUSEHOLD_CATALOG)
    if diags:
        print(render_diagnostics(diags))
    print(f"{args.plan}: {len(ast)} sub-goal(s), {'invalid' if has_errors(diags) else 'ok'}")
    return 1 if has_errors(diags) else 0


def cmd_fixtures(args) -> int:
    tasks = [(t.value, args.seed * 1000 + i) for t in TaskType for i in range(args.per_type)]
    out = Path(args.out)
    ids = write_ablation_fixtures(out / "fixtures", tasks)
    config = {
        "manifest": [{"task_type": t, "seed": s} for t, s in tasks],
        "modes": ["open", "implicit", "explicit"],
        "controller": {"max_refinement_rounds": 4, "action_cap": 50},
        "backend": {"kind": "scripted", "fixtures": "fixtures"},
        "out": "results",
        "workers": 4,
    }
    (out / "suite.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(ids)} fixture sets and {out / 'suite.json'} (fault cycle {', '.join(FAULT_CYCLE)})")
    return 0


def cmd_golden(args) -> int:
    session = lettuce_session()
    gateway = Gateway(ScriptedBackend(lettuce_queues()))
    record = run_episode(ControllerConfig(mode=LoopMode.EXPLICIT), session, gateway)
    data = record.to_dict()
    data["llm_calls"] = record.llm_calls
    print(render_replay(data))
    return 0 if record.success else 1


def cmd_skills_acquire(args) -> int:
    store = SkillStore.load(args.store) if Path(args.store).exists() else SkillStore()
    candidates = acquire(episodes_from_trace(args.trace))
    for c in candidates:
        store.add(c)
    store.persist(args.store)
    print(f"added {len(candidates)} candidate(s) to {args.store}")
    return 0


def cmd_skills_filter(args) -> int:
    config = SuiteConfig.load(args.config)
    store = SkillStore.load(args.store)
    ccfg = replace(config.controller, mode=LoopMode.EXPLICIT)
    kept = [r for r in store.records if r.status is not SkillStatus.CANDIDATE]
    result = SkillStore(kept)
    for cand in (r for r in store.records if r.status is SkillStatus.CANDIDATE):
        entries = [e for e in config.manifest if e.task_type.value == cand.signature.split(":")[0] and e.seed != cand.seed]
        if not entries:
            print(f"skipping {cand.signature}: no evaluation tasks in the manifest")
            result.add(cand)
            continue
        tasks = [generate_task(e.task_type, e.seed)[0] for e in entries]

        def run(_tasks, exemplar_fn, entries=entries):
            return [r.success for r in run_episodes(entries, ccfg, config.backend, exemplar_fn, config.workers)]

        judged = filter_skill(cand, tasks, run)
        result.add(judged)
        ev = judged.eval
        print(f"{judged.status.value:9} {judged.signature}  without={ev.success_rate_without} with={ev.success_rate_with}")
    result.persist(args.store)
    return 0


def cmd_skills_list(args) -> int:
    store = SkillStore.load(args.store)
    for r in store.records:
        ev = r.eval
        rates = f"  without={ev.success_rate_without} with={ev.success_rate_with}" if ev else ""
        print(f"{r.status.value:9} {r.signature}  from {r.episode_id}{rates}")
    return 0


def cmd_skills_discover(args) -> int:
    config = SuiteConfig.load(args.config)
    store = SkillStore.load(args.store) if Path(args.store).exists() else SkillStore()
    if config.skills.rounds <= 0:
        config = replace(config, skills=replace(config.skills, rounds=1))
    store = discover_skills(config, store)
    store.persist(args.store)
    return cmd_skills_list(args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="closedloop", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a task suite")
    p.add_argument("--config", required=True, help="suite config (JSON)")
    p.add_argument("--mode", action="append", choices=[m.value for m in LoopMode], help="loop mode (repeatable)")
    p.add_argument("--backend", help="ablation, skills, remote, or a scripted fixture directory")
    p.add_argument("--rounds", type=int, help="max refinement rounds")
    p.add_argument("--cap", type=int, help="action cap per episode")
    p.add_argument("--seed", type=int, help="global seed for counted manifest entries")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="print a results table")
    p.add_argument("results", nargs="?", default="results/results.json")
    p.add_argument("--format", choices=["csv", "text", "json"], default="text")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", help="re-render an episode trace")
    p.add_argument("trace")
    p.add_argument("--task", help="only this task id")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("check", help="parse and validate a plan file")
    p.add_argument("plan")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("fixtures", help="write fault-injected scripted fixtures and a suite config")
    p.add_argument("--out", required=True)
    p.add_argument("--per-type", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("golden", help="run the clean-lettuce refine-then-resume scenario")
    p.set_defaults(func=cmd_golden)

    p = sub.add_parser("skills", help="skill memory")
    ssub = p.add_subparsers(dest="skills_command", required=True)
    q = ssub.add_parser("acquire", help="add candidates from a trace's successful episodes")
    q.add_argument("--trace", required=True)
    q.add_argument("--store", required=True)
    q.set_defaults(func=cmd_skills_acquire)
    q = ssub.add_parser("filter", help="archive or discard candidates by measured gain")
    q.add_argument("--config", required=True, help="suite config whose manifest holds the evaluation tasks")
    q.add_argument("--store", required=True)
    q.set_defaults(func=cmd_skills_filter)
    q = ssub.add_parser("list", help="show stored skills")
    q.add_argument("--store", required=True)
    q.set_defaults(func=cmd_skills_list)
    q = ssub.add_parser("discover", help="run acquisition and filtering rounds from a config")
    q.add_argument("--config", required=True)
    q.add_argument("--store", required=True)
    q.set_defaults(func=cmd_skills_discover)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
