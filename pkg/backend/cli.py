"""Command-line entry point: train, evaluate, run the experiment protocols,
write reports, verify manifests and export layouts."""
from typing import List, Optional
import argparse
import json
import logging
import os
import sys

import pandas as pd

from actions import layout_spec as action_layout
from cards import ARCHETYPES, all_decks, export_catalog, export_deck
from config import load_config, save_config
from harness import (MatchSpec, case_study, discover_checkpoints, run_ablation, run_headline, run_match,
                     run_transfer, summarize_match, train_grid)
from manifest import evaluation_record, verify_manifest, write_manifest
from model_training import load_checkpoint, train_agent
from observe import layout_spec as observation_layout
from ppo import TrainingDivergedError, VARIANTS
from report import matchup_heatmap, write_calibration, write_case_study, write_report
from scm import build_graph, export_dot, graph_to_dict

logger = logging.getLogger(__name__)

EXPORTS = ('catalog', 'decks', 'actions', 'observation', 'scm', 'scm-dot')


def _config(args):
    return load_config(args.config, args.set, args.profile)


def _run_dir(args, cfg) -> str:
    return args.run_dir or cfg.harness.run_dir


def cmd_train(args) -> int:
    cfg = _config(args)
    run_dir = _run_dir(args, cfg)
    opponents = [a for a in ARCHETYPES if a != args.holdout] if args.holdout else (args.opponents or list(ARCHETYPES))
    seeds = [args.seed] if args.seed is not None else cfg.harness.seeds
    for seed in seeds:
        ckpt = train_agent(args.agent, args.deck, opponents, cfg, seed, os.path.join(run_dir, 'models'),
                           args.holdout, args.steps)
        write_calibration(ckpt['metrics'], os.path.join(run_dir, 'reports'),
                          stem=f'calibration_{args.agent}_{args.deck}_seed{seed}')
    save_config(cfg, os.path.join(run_dir, 'config.json'))
    write_manifest(run_dir, f'train-{args.agent}-{args.deck}', cfg.dict(), seeds, sys.argv)
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    run_dir = _run_dir(args, cfg)
    spec = MatchSpec(args.agent_a, args.agent_b, args.deck_a, args.deck_b, args.episodes,
                     args.seeds or cfg.harness.seeds, cfg.engine.turn_cap)
    rows = run_match(spec)
    os.makedirs(run_dir, exist_ok=True)
    pd.DataFrame(rows).to_csv(os.path.join(run_dir, 'match_rows.csv'), index=False)
    summary = summarize_match(rows)
    print(json.dumps(summary, indent=2))
    write_manifest(run_dir, 'eval', cfg.dict(), spec.seeds, sys.argv, evaluation_record(spec, rows))
    return 0


def cmd_headline(args) -> int:
    cfg = _config(args)
    run_dir = _run_dir(args, cfg)
    if args.train:
        train_grid(cfg, run_dir, cfg.harness.agents, cfg.harness.decks)
    found = discover_checkpoints(os.path.join(run_dir, 'models'))['pool']
    checkpoints = {agent: found.get(agent, {}) for agent in cfg.harness.agents}
    paired = {'ppo', 'cgfa'} <= set(checkpoints)
    report = run_headline(cfg, checkpoints, baseline='ppo' if paired else None,
                          treatment='cgfa' if paired else None)
    for agent in report.tables['rates']['agent'].unique():
        report.tables[f'heatmap_{agent}'] = matchup_heatmap(report.tables['rates'], agent).reset_index()
    write_report(report, os.path.join(run_dir, 'reports'))
    print(report.tables['headline'].to_string(index=False))
    write_manifest(run_dir, 'headline', cfg.dict(), cfg.harness.seeds, sys.argv)
    return 0


def cmd_transfer(args) -> int:
    cfg = _config(args)
    run_dir = _run_dir(args, cfg)
    if args.train:
        train_grid(cfg, run_dir, cfg.harness.agents, [args.deck], list(ARCHETYPES))
    found = discover_checkpoints(os.path.join(run_dir, 'models'))['holdout']
    report = run_transfer(cfg, args.deck, {agent: found.get(agent, {}) for agent in cfg.harness.agents})
    write_report(report, os.path.join(run_dir, 'reports'))
    print(report.tables['transfer'].to_string(index=False))
    write_manifest(run_dir, 'transfer', cfg.dict(), cfg.harness.seeds, sys.argv)
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    run_dir = _run_dir(args, cfg)
    variants = args.variants or list(VARIANTS)
    found = discover_checkpoints(os.path.join(run_dir, 'models'))['pool']
    existing = {v: found.get(v, {}).get(cfg.harness.ablation_deck, {}) for v in variants}
    report = run_ablation(cfg, run_dir, variants, existing)
    write_report(report, os.path.join(run_dir, 'reports'))
    print(report.tables['ablation'].to_string(index=False))
    write_manifest(run_dir, 'ablation', cfg.dict(), cfg.harness.seeds, sys.argv)
    return 0


def cmd_report(args) -> int:
    cfg = _config(args)
    run_dir = _run_dir(args, cfg)
    out_dir = os.path.join(run_dir, 'reports')
    checkpoint = load_checkpoint(args.checkpoint)
    paths = write_calibration(checkpoint['metrics'], out_dir)
    if args.case_study:
        trace = case_study(args.checkpoint, checkpoint['deck'], args.opponent, args.seed or 0,
                           turn_cap=cfg.engine.turn_cap)
        paths += write_case_study(trace, out_dir)
    print('\n'.join(paths))
    return 0


def cmd_manifest(args) -> int:
    result = verify_manifest(args.path)
    print(json.dumps(result, indent=2))
    return 0 if result['ok'] else 1


def cmd_export(args) -> int:
    if args.what == 'catalog':
        payload = export_catalog()
    elif args.what == 'decks':
        payload = {name: export_deck(deck) for name, deck in all_decks().items()}
    elif args.what == 'actions':
        payload = action_layout()
    elif args.what == 'observation':
        payload = observation_layout()
    elif args.what == 'scm':
        payload = graph_to_dict()
    else:
        text = export_dot(build_graph())
        payload = None
    if payload is not None:
        text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, 'w', encoding='utf-8') as f:
            f.write(text)
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Causal card-game arena')
    parser.add_argument('--config', type=str, default=None, help='JSON config file')
    parser.add_argument('--set', action='append', default=[], metavar='SECTION.KEY=VALUE')
    parser.add_argument('--profile', choices=['desk', 'full'], default='desk')
    parser.add_argument('--run-dir', type=str, default=None)
    parser.add_argument('--log-level', default='INFO')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='train one agent for a deck')
    p.add_argument('--agent', choices=list(VARIANTS), default='cgfa')
    p.add_argument('--deck', choices=list(ARCHETYPES), default='mono_red_aggro')
    p.add_argument('--opponents', nargs='+', choices=list(ARCHETYPES))
    p.add_argument('--holdout', choices=list(ARCHETYPES))
    p.add_argument('--steps', type=int)
    p.add_argument('--seed', type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help='play a paired-seed match')
    p.add_argument('--agent-a', required=True, help="'random', 'heuristic' or a checkpoint path")
    p.add_argument('--agent-b', default='heuristic')
    p.add_argument('--deck-a', choices=list(ARCHETYPES), required=True)
    p.add_argument('--deck-b', choices=list(ARCHETYPES), required=True)
    p.add_argument('--episodes', type=int, default=30)
    p.add_argument('--seeds', type=int, nargs='+')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('headline', help='per-deck agent comparison with anchors')
    p.add_argument('--train', action='store_true', help='train missing checkpoints first')
    p.set_defaults(func=cmd_headline)

    p = sub.add_parser('transfer', help='leave-one-out generalization gap')
    p.add_argument('--deck', choices=list(ARCHETYPES), default='mono_red_aggro')
    p.add_argument('--train', action='store_true')
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser('ablate', help='variant ablation on the diagnostic deck')
    p.add_argument('--variants', nargs='+', choices=list(VARIANTS))
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser('report', help='calibration series and case study for a checkpoint')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--case-study', action='store_true')
    p.add_argument('--opponent', choices=list(ARCHETYPES), default='azorius_control')
    p.add_argument('--seed', type=int)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser('manifest', help='manifest tools')
    msub = p.add_subparsers(dest='manifest_command', required=True)
    v = msub.add_parser('verify', help='replay a run from its manifest')
    v.add_argument('path')
    v.set_defaults(func=cmd_manifest)

    p = sub.add_parser('export', help='export catalog, decks, layouts or the SCM graph')
    p.add_argument('what', choices=list(EXPORTS))
    p.add_argument('--out', type=str)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.INFO),
                        format='%(asctime)s %(levelname)s %(name)s %(message)s')
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, TrainingDivergedError) as exc:
        logger.error('command failed command=%s error=%s', args.command, exc)
        print(f'error: {exc}', file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())
