"""Command-line interface.

Sub-commands: ``align`` runs the full pipeline, ``paris-only`` runs pure
reasoning, ``eval`` scores a mapping file against gold links, ``synth``
writes a synthetic fixture directory. Exit codes: 0 success, 1 runtime
error, 2 configuration/usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .kg import FeatureStore, KgPair, parse_features, parse_gold_links, parse_kg
from .model import save_model
from .pipeline import ConfigError, PipelineConfig, run_pipeline
from .reasoning import ParisConfig, emit_mappings, run_paris, write_mappings_tsv
from .synth import SynthSpec, generate
from .train import TrainConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgalign", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_align = sub.add_parser("align", help="run the full alignment pipeline")
    p_align.add_argument("--kg1", required=True, help="directory with rel_triples and attr_triples")
    p_align.add_argument("--kg2", required=True, help="directory with rel_triples and attr_triples")
    p_align.add_argument("--features1", required=True)
    p_align.add_argument("--features2", required=True)
    p_align.add_argument("--gold", help="optional ent_links file, evaluation only")
    p_align.add_argument("--alpha", type=float, default=0.5)
    p_align.add_argument("--gamma", type=float, default=0.4)
    p_align.add_argument("--neg-k", type=int, default=5)
    p_align.add_argument("--dim", type=int, default=128)
    p_align.add_argument("--rounds", type=int, default=3)
    p_align.add_argument("--epochs", type=int, default=200)
    p_align.add_argument("--lr", type=float, default=1e-3)
    p_align.add_argument("--theta", type=float, default=0.5)
    p_align.add_argument("--csls-k", type=int, default=10)
    p_align.add_argument("--no-csls", action="store_true")
    p_align.add_argument("--seed", type=int, default=0)
    p_align.add_argument("--final", choices=("pr", "se"), default="se")
    p_align.add_argument(
        "--warm-start", action="store_true",
        help="carry model parameters across rounds instead of re-initializing",
    )
    p_align.add_argument("--out", required=True, help="output mapping TSV")
    p_align.add_argument("--model-out", help="optional trained model file")
    p_align.add_argument("--log", help="optional round-log JSON path")

    p_paris = sub.add_parser("paris-only", help="run probabilistic reasoning only")
    p_paris.add_argument("--kg1", required=True)
    p_paris.add_argument("--kg2", required=True)
    p_paris.add_argument("--theta", type=float, default=0.5)
    p_paris.add_argument("--max-iters", type=int, default=10)
    p_paris.add_argument("--out", required=True)

    p_eval = sub.add_parser("eval", help="score a mapping TSV against gold links")
    p_eval.add_argument("--mappings", required=True)
    p_eval.add_argument("--gold", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic aligned pair")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--entities", type=int, default=50)
    p_synth.add_argument("--relations", type=int, default=3)
    p_synth.add_argument("--attributes", type=int, default=2)
    p_synth.add_argument("--avg-degree", type=float, default=4.0)
    p_synth.add_argument("--overlap", type=float, default=0.5)
    p_synth.add_argument("--sigma", type=float, default=0.1)
    p_synth.add_argument("--images", type=int, default=3)
    p_synth.add_argument("--feat-dim", type=int, default=32)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--powerlaw", action="store_true")
    return parser


def _load_pair(args) -> KgPair:
    kg1 = parse_kg(os.path.join(args.kg1, "rel_triples"), os.path.join(args.kg1, "attr_triples"))
    kg2 = parse_kg(os.path.join(args.kg2, "rel_triples"), os.path.join(args.kg2, "attr_triples"))
    features1 = parse_features(args.features1, kg1)
    features2 = parse_features(args.features2, kg2)
    gold = parse_gold_links(args.gold, kg1, kg2) if getattr(args, "gold", None) else None
    return KgPair(kg1=kg1, kg2=kg2, features1=features1, features2=features2, gold_links=gold)


def _cmd_align(args) -> int:
    pair = _load_pair(args)
    config = PipelineConfig(
        paris=ParisConfig(alpha=args.alpha, theta=args.theta),
        train=TrainConfig(gamma=args.gamma, neg_k=args.neg_k, lr=args.lr, epochs=args.epochs),
        dim=args.dim,
        csls_k=args.csls_k,
        use_csls=not args.no_csls,
        rounds=args.rounds,
        seed=args.seed,
        final=args.final,
        reinit_each_round=not args.warm_start,
    )
    result = run_pipeline(pair, config)
    write_mappings_tsv(result.mappings, pair.kg1, pair.kg2, args.out)
    if args.model_out and result.model is not None:
        save_model(result.model, args.model_out)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as f:
            json.dump(result.log_dict(), f, indent=2, sort_keys=True)
    last = result.round_log[-1] if result.round_log else None
    if last and last.se_eval is not None:
        print(json.dumps(last.se_eval, indent=2, sort_keys=True))
    print(f"wrote {len(result.mappings)} mappings to {args.out}")
    return 0


def _cmd_paris_only(args) -> int:
    kg1 = parse_kg(os.path.join(args.kg1, "rel_triples"), os.path.join(args.kg1, "attr_triples"))
    kg2 = parse_kg(os.path.join(args.kg2, "rel_triples"), os.path.join(args.kg2, "attr_triples"))
    empty = FeatureStore(dim=1, name_vec={}, image_vecs={})
    pair = KgPair(kg1=kg1, kg2=kg2, features1=empty, features2=empty)
    state = run_paris(pair, ParisConfig(theta=args.theta, max_iters=args.max_iters))
    mappings = emit_mappings(state, args.theta)
    write_mappings_tsv(mappings, kg1, kg2, args.out)
    print(f"wrote {len(mappings)} mappings to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    gold = []
    with open(args.gold, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line:
                u1, u2 = line.split("\t")[:2]
                gold.append((u1, u2))
    emitted = {}
    with open(args.mappings, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line:
                parts = line.split("\t")
                emitted[parts[0]] = parts[1]
    if not gold:
        print("no gold links", file=sys.stderr)
        return 1
    correct = sum(1 for u1, u2 in gold if emitted.get(u1) == u2)
    acc = correct / len(gold)
    print(json.dumps({"hit": {"1": acc}, "mrr": acc, "n": len(gold)}, indent=2, sort_keys=True))
    return 0


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        n_entities=args.entities,
        n_relations=args.relations,
        n_attributes=args.attributes,
        avg_degree=args.avg_degree,
        name_overlap_ratio=args.overlap,
        feature_noise_sigma=args.sigma,
        images_per_entity=args.images,
        seed=args.seed,
        feat_dim=args.feat_dim,
        powerlaw=args.powerlaw,
    )
    pair = generate(spec, args.out)
    print(
        f"wrote fixture to {args.out}: {pair.kg1.n_entities}+{pair.kg2.n_entities} entities, "
        f"{len(pair.kg1.rel_triples)} triples per side"
    )
    return 0


_COMMANDS = {
    "align": _cmd_align,
    "paris-only": _cmd_paris_only,
    "eval": _cmd_eval,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
