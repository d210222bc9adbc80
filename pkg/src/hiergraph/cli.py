"""``hiergraph`` command line: build, hierarchy, query, eval, simulate, plot."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from hiergraph.config import AppConfig, ConfigError, load_config
from hiergraph.graph import Hierarchy, InvariantError
from hiergraph.index import Index, IndexFormatError
from hiergraph.providers import (
    AliasDiscriminator, HTTPEmbedder, HTTPGenerator, HTTPReranker, LLMDiscriminator, LLMExtractor,
    ProviderConfig, ProviderError, Providers,
)

log = logging.getLogger("hiergraph")


class UserError(Exception):
    """Bad arguments, configuration or input files (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------- providers

def make_providers(cfg: AppConfig, mock: bool) -> Providers:
    if mock:
        return Providers.mock(cfg.dim)
    missing = [k for k in ("embed_url", "rerank_fast_url", "rerank_fine_url", "generate_url") if not getattr(cfg, k)]
    if missing:
        raise UserError(f"no endpoint configured for {', '.join(missing)}; set them in the config file "
                        f"or environment, or pass --mock-providers")

    def pc(url):
        return ProviderConfig(url, timeout=cfg.timeout, api_key=cfg.api_key or None)

    generator = HTTPGenerator(pc(cfg.generate_url))
    return Providers(HTTPEmbedder(pc(cfg.embed_url), cfg.dim), HTTPReranker(pc(cfg.rerank_fast_url)),
                     HTTPReranker(pc(cfg.rerank_fine_url)), LLMExtractor(generator),
                     LLMDiscriminator(generator), generator)


def _index_path(args, cfg: AppConfig) -> Path:
    path = args.index or cfg.index
    if not path:
        raise UserError("no index given; pass --index or set 'index' in the config")
    return Path(path)


def _load(path: Path, need_hierarchy: bool = True) -> Index:
    try:
        index = Index.load(path)
    except FileNotFoundError:
        raise UserError(f"index not found at {path} (expected {path / 'manifest'}); run 'build' first") from None
    except IndexFormatError as exc:
        raise UserError(f"index at {path} is unreadable: {exc}") from None
    if need_hierarchy and index.hierarchy.depth == 0:
        raise UserError(f"index at {path} has no hierarchy; run 'hierarchy --index {path}' first")
    return index


# ------------------------------------------------------------------ commands

def cmd_build(args, cfg: AppConfig) -> int:
    from hiergraph.ingest import ResolutionParams, build_base_graph, chunk_text, read_corpus, resolve_entities

    providers = make_providers(cfg, args.mock_providers)
    try:
        docs = read_corpus(args.corpus)
    except FileNotFoundError as exc:
        raise UserError(str(exc)) from None
    chunks = [c for doc_id, text in docs for c in chunk_text(text, doc_id, cfg.chunk_size, cfg.overlap)]
    graph = build_base_graph(chunks, providers.extractor, providers.embedder)
    discriminator = providers.discriminator
    if args.aliases:
        discriminator = AliasDiscriminator(json.loads(Path(args.aliases).read_text(encoding="utf-8")))
    graph = resolve_entities(graph, ResolutionParams(cfg.tau), discriminator, providers.embedder)
    out = Path(args.out or cfg.index or "index")
    Index(graph, Hierarchy()).save(out)
    print(f"built {out}: {len(graph.entities)} entities, {len(graph.relations)} relations, {len(chunks)} chunks")
    return 0


def cmd_hierarchy(args, cfg: AppConfig) -> int:
    from hiergraph.hierarchy import build_hierarchy, populate_hierarchy
    from hiergraph.louvain import LouvainParams

    path = _index_path(args, cfg)
    index = _load(path, need_hierarchy=False)
    providers = make_providers(cfg, args.mock_providers)
    skeleton = build_hierarchy(index.graph, LouvainParams(gamma=cfg.gamma, seed=cfg.seed), cfg.levels)
    hierarchy = populate_hierarchy(index.graph, skeleton, providers.generator, providers.embedder)
    Index(index.graph, hierarchy).save(path)
    print(f"hierarchy for {path}: " + ", ".join(f"level {i}: {len(lv)}" for i, lv in enumerate(hierarchy.levels, 1)))
    return 0


def cmd_query(args, cfg: AppConfig) -> int:
    from hiergraph.eval import run_strategy
    from hiergraph.retrieval import RetrievalParams

    index = _load(_index_path(args, cfg))
    providers = make_providers(cfg, args.mock_providers)
    result = run_strategy(args.strategy, args.question, index, providers, RetrievalParams(cfg.k, cfg.m, cfg.budget))
    payload = result.to_json()
    if not args.trace:
        payload.pop("trace")
    print(json.dumps(payload, indent=2))
    return 0


def cmd_eval(args, cfg: AppConfig) -> int:
    from hiergraph.eval import STRATEGIES, read_dataset, run_eval
    from hiergraph.retrieval import RetrievalParams

    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    bad = [s for s in strategies if s not in STRATEGIES]
    if bad or not strategies:
        raise UserError(f"unknown strategies {bad}; choose from {', '.join(STRATEGIES)}")
    index = _load(_index_path(args, cfg))
    if not Path(args.dataset).is_file():
        raise UserError(f"dataset not found: {args.dataset}")
    items = read_dataset(args.dataset)
    providers = make_providers(cfg, args.mock_providers)
    report = run_eval(items, index, strategies, providers, RetrievalParams(cfg.k, cfg.m, cfg.budget),
                      parallelism=args.parallelism)
    report.write(args.out)
    print(report.table())
    return 0


def cmd_simulate(args, cfg: AppConfig) -> int:
    from hiergraph.seesaw import DEFAULT_STEPS, SIM_TEMPERATURE, SimConfig, run_sim

    sim = SimConfig(seed=args.seed if args.seed is not None else cfg.seed,
                    steps=args.steps or DEFAULT_STEPS, mode=args.mode,
                    temperature=args.temperature or SIM_TEMPERATURE, window=cfg.window,
                    advantage_mode=cfg.advantage_mode)
    traj = run_sim(sim)
    traj.write_csv(args.out)
    final = traj.final_rewards()
    print(f"{args.mode}: final r1={final[0]:.4f} r2={final[1]:.4f} r3={final[2]:.4f} -> {args.out}")
    return 0


def cmd_plot(args, cfg: AppConfig) -> int:
    from hiergraph.seesaw import plot_trajectories

    for p in args.inputs:
        if not Path(p).is_file():
            raise UserError(f"trajectory file not found: {p}")
    print(plot_trajectories(args.inputs, args.out))
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file (or $HIERGRAPH_CONFIG)")
    common.add_argument("--mock-providers", action="store_true", help="use offline mocks for every provider slot")
    common.add_argument("--log-level", default=None)

    parser = _Parser(prog="hiergraph", description="Hierarchical graph retrieval toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("build", parents=[common], help="chunk, extract and resolve a corpus into an index")
    p.add_argument("--corpus", required=True, help="directory of text documents")
    p.add_argument("--out", help="index directory to write")
    p.add_argument("--chunk-size", type=int)
    p.add_argument("--overlap", type=int)
    p.add_argument("--tau", type=float, help="resolution similarity threshold")
    p.add_argument("--aliases", help="JSON object of name -> alias pairs for the mock discriminator")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("hierarchy", parents=[common], help="detect communities, summarize and embed (in place)")
    p.add_argument("--index")
    p.add_argument("--gamma", type=float)
    p.add_argument("--levels", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_hierarchy)

    p = sub.add_parser("query", parents=[common], help="answer one question")
    p.add_argument("--index")
    p.add_argument("--question", required=True)
    p.add_argument("--beam", type=int, dest="k")
    p.add_argument("--top-m", type=int, dest="m")
    p.add_argument("--budget", type=int)
    p.add_argument("--strategy", choices=("deep", "local", "global"), default="deep")
    p.add_argument("--trace", action="store_true", help="include per-phase candidates")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", parents=[common], help="score strategies on a QA dataset")
    p.add_argument("--index")
    p.add_argument("--dataset", required=True, help="JSONL records {id, question, answers, answer_path}")
    p.add_argument("--strategies", default="deep,local,global")
    p.add_argument("--out", required=True, help="report path (timings go to <stem>.timings.json)")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--beam", type=int, dest="k")
    p.add_argument("--top-m", type=int, dest="m")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", parents=[common], help="run the synthetic seesaw optimization")
    p.add_argument("--mode", choices=("static", "dynamic"), default="dynamic")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plot", parents=[common], help="plot one or more simulate CSVs to an image")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True, help="image path (e.g. seesaw.png)")
    p.set_defaults(func=cmd_plot)
    return parser


_CONFIG_FLAGS = ("chunk_size", "overlap", "tau", "gamma", "levels", "seed", "k", "m", "budget", "log_level")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cli_values = {k: getattr(args, k) for k in _CONFIG_FLAGS if getattr(args, k, None) is not None}
        cfg = load_config(cli_values, args.config)
        logging.basicConfig(level=cfg.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        return args.func(args, cfg)
    except (UserError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ProviderError as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
