"""``xdup`` command line.

Exit codes: 0 success, 1 protocol or runtime failure, 2 usage error.
Any argument list may be read from a text file with ``@path`` (one flag or
value per line). ``XDUP_STORE`` overrides the default node store directory.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .core import Rng
from .net import ProtocolError, parse_endpoint

STORE_ENV = "XDUP_STORE"


class _Parser(argparse.ArgumentParser):
    def convert_arg_line_to_args(self, arg_line: str):
        line = arg_line.strip()
        if not line or line.startswith("#"):
            return []
        return line.split()


def _endpoint(text: str) -> tuple[str, int]:
    try:
        return parse_endpoint(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xdup", description="Privacy-preserving cross-organisation deduplication.", fromfile_prefix_chars="@")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a labelled synthetic corpus")
    g.add_argument("--n", type=_nonneg, required=True, help="reference records")
    g.add_argument("--dups", type=_nonneg, default=0, help="duplicate test records")
    g.add_argument("--nondups", type=_nonneg, default=None, help="non-duplicate test records (default: --dups)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True, help="output directory")

    e = sub.add_parser("embed", help="embed a record CSV into bit strings")
    e.add_argument("--params", type=Path, required=True, help="parameter file (created if missing)")
    e.add_argument("--in", dest="inp", type=Path, required=True)
    e.add_argument("--out", type=Path, required=True)
    e.add_argument("--l", type=_positive, default=511)
    e.add_argument("--q", type=_positive, default=2)
    e.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("calibrate", help="choose tau for a target false-positive rate")
    c.add_argument("--params", type=Path, required=True)
    c.add_argument("--corpus", type=Path, help="directory from gen-data; generated when omitted")
    c.add_argument("--n-ref", type=_positive, default=1 << 14)
    c.add_argument("--n-dup", type=_nonneg, default=1 << 12)
    c.add_argument("--n-nondup", type=_nonneg, default=1 << 12)
    c.add_argument("--data-seed", type=int, default=0)
    c.add_argument("--target-fpr", type=float, default=0.001)
    c.add_argument("--write", action="store_true", help="store the chosen tau in the parameter file")

    n = sub.add_parser("node", help="run a compute node")
    n.add_argument("--id", type=int, choices=(1, 2), required=True)
    n.add_argument("--listen-peer", type=_endpoint, required=True)
    n.add_argument("--listen-client", type=_endpoint, required=True)
    n.add_argument("--peer", type=_endpoint, help="node 2's peer endpoint (node 1 only)")
    n.add_argument("--store", type=Path, default=None)
    n.add_argument("--params", type=Path, required=True)
    n.add_argument("--ot", choices=("dealer", "group"), default="dealer")
    n.add_argument("--dealer-seed", type=int, default=0)
    n.add_argument("--protocol", choices=("auto", "ss", "ssb"), default="auto")
    n.add_argument("--shape", choices=("gigabit", "slow", "none"), default="none", help="peer link shape")

    for name in ("setup", "query", "retrieve"):
        s = sub.add_parser(name, help=f"field-team {name}")
        s.add_argument("--team", type=_nonneg, required=True)
        s.add_argument("--node1", type=_endpoint, required=True)
        s.add_argument("--node2", type=_endpoint, required=True)
        s.add_argument("--params", type=Path, required=True)
        s.add_argument("--mode", choices=("online", "offline"), default="offline")
        if name in ("setup", "query"):
            s.add_argument("--in", dest="inp", type=Path, required=True, help="record CSV")
        if name == "query":
            s.add_argument("--protocol", choices=("auto", "ss", "ssb"), default="auto")
        if name == "retrieve":
            s.add_argument("--handle", required=True)
            s.add_argument("--timeout", type=float, default=600.0)

    b = sub.add_parser("bench", help="protocol benchmarks")
    bsub = b.add_subparsers(dest="bench", required=True)
    f = bsub.add_parser("fpsi", help="one FPSI configuration as a CSV row")
    f.add_argument("--protocol", choices=("plain", "ss", "ssb"), default="plain")
    f.add_argument("--l", type=_positive, default=127)
    f.add_argument("--tau", type=_nonneg, default=0)
    f.add_argument("--nq", type=_positive, default=1)
    f.add_argument("--nr", type=_positive, default=64)
    f.add_argument("--ot", choices=("dealer", "group"), default="dealer")
    f.add_argument("--shape", choices=("gigabit", "slow", "none"), default="none")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--repeat", type=_positive, default=1)
    f.add_argument("--no-header", action="store_true")

    o = sub.add_parser("oracle-check", help="compare protocols with brute force")
    o.add_argument("--instances", type=_positive, default=200)
    o.add_argument("--max-l", type=_positive, default=63)
    o.add_argument("--max-n", type=_positive, default=16)
    o.add_argument("--seed", type=int, default=0)
    return p


def _load_params(path: Path):
    from .embedding import EmbeddingParams

    return EmbeddingParams.load(path)


def cmd_gen_data(args) -> int:
    from .dataset import build_eval_corpus, export_corpus

    nondups = args.dups if args.nondups is None else args.nondups
    corpus = build_eval_corpus(args.n, args.dups, nondups, args.seed)
    ref, test = export_corpus(args.out, corpus)
    print(f"wrote {len(corpus.reference)} reference records to {ref}")
    print(f"wrote {len(corpus.test)} labelled test records to {test}")
    return 0


def cmd_embed(args) -> int:
    from .dataset import ingest_csv
    from .embedding import EmbeddingParams, embed_many, save_embeddings

    if args.params.exists():
        params = EmbeddingParams.load(args.params)
    else:
        params = EmbeddingParams(args.l, args.q, seed=args.seed)
        params.save(args.params)
    result = ingest_csv(args.inp)
    save_embeddings(args.out, embed_many(result.records, params))
    print(f"embedded {len(result.records)} records (dropped {result.dropped} incomplete) to {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    from .dataset import build_eval_corpus, load_corpus
    from .embedding import EmbeddingParams, calibrate_threshold, embed_many

    if not 0 < args.target_fpr <= 1:
        raise _Usage("--target-fpr must be in (0, 1]")
    params = EmbeddingParams.load(args.params) if args.params.exists() else EmbeddingParams()
    if args.corpus is not None:
        corpus = load_corpus(args.corpus)
    else:
        corpus = build_eval_corpus(args.n_ref, args.n_dup, args.n_nondup, args.data_seed)
    ref = embed_many(corpus.reference, params)
    test = embed_many([p.record for p in corpus.test], params)
    cal = calibrate_threshold(ref, test, corpus.labels, args.target_fpr)
    print(f"tau={cal.tau} fpr={cal.fpr:.8f} fnr={cal.fnr:.8f}")
    if cal.diagnostic:
        print(f"warning: {cal.diagnostic}", file=sys.stderr)
    if args.write:
        params.with_tau(cal.tau).save(args.params)
    return 0


def cmd_node(args) -> int:
    from .net import NetShape
    from .system import ComputeNode, NodeConfig

    params = _load_params(args.params)
    if params.tau is None:
        raise _Usage("parameter file has no tau; run calibrate --write first")
    if args.id == 1 and args.peer is None:
        raise _Usage("node 1 needs --peer")
    store = args.store or (Path(os.environ[STORE_ENV]) / f"node{args.id}" if STORE_ENV in os.environ else Path(f"xdup-node{args.id}"))
    config = NodeConfig(
        node_id=args.id,
        dimension=params.dimension,
        tau=params.tau,
        store_dir=store,
        client_host=args.listen_client[0],
        client_port=args.listen_client[1],
        peer_host=args.listen_peer[0],
        peer_port=args.listen_peer[1],
        peer_address=args.peer,
        ot_backend=args.ot,
        dealer_seed=args.dealer_seed,
        protocol=args.protocol,
        shape=NetShape.named(args.shape),
    )
    node = ComputeNode(config)
    print(f"node {args.id}: store {store}, teams {node.store.lengths()}", flush=True)
    try:
        node.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def _client(args):
    from .dataset import ingest_csv
    from .system import TeamClient

    params = _load_params(args.params)
    client = TeamClient(args.team, params, args.node1, args.node2, Rng())
    records = ingest_csv(args.inp).records if getattr(args, "inp", None) else None
    return client, records


def cmd_setup(args) -> int:
    client, records = _client(args)
    length = client.setup(records)
    print(f"team {args.team}: {length} records registered")
    return 0


def cmd_query(args) -> int:
    client, records = _client(args)
    if args.mode == "online" and len(records) != 1:
        raise _Usage(f"online mode takes exactly one record, the file has {len(records)}")
    print(client.query(records, args.mode, protocol=args.protocol))
    return 0


def cmd_retrieve(args) -> int:
    client, _ = _client(args)
    result = client.retrieve(args.handle, args.timeout)
    print("query,org,team,record")
    for d in result.duplicates:
        print(f"{d.query},{d.org},{d.team},{d.record}")
    return 0


def cmd_bench(args) -> int:
    from .bench import bench_fpsi, to_csv

    if args.tau > args.l:
        raise _Usage("--tau must not exceed --l")
    if args.protocol == "ssb" and args.nq < 2:
        raise _Usage("ssb batching is not applicable for --nq 1; use --protocol ss")
    row = bench_fpsi(args.protocol, args.l, args.tau, args.nq, args.nr, args.ot, args.shape, args.seed, args.repeat)
    sys.stdout.write(to_csv([row], header=not args.no_header))
    return 0


def cmd_oracle_check(args) -> int:
    from .checks import oracle_check

    report = oracle_check(args.instances, args.max_l, args.max_n, args.seed)
    for line in report.mismatches:
        print(f"MISMATCH {line}")
    print(f"{report.instances} protocol runs, {len(report.mismatches)} mismatches")
    return 0 if report.ok else 1


class _Usage(Exception):
    pass


COMMANDS = {
    "gen-data": cmd_gen_data,
    "embed": cmd_embed,
    "calibrate": cmd_calibrate,
    "node": cmd_node,
    "setup": cmd_setup,
    "query": cmd_query,
    "retrieve": cmd_retrieve,
    "bench": cmd_bench,
    "oracle-check": cmd_oracle_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"xdup: error: {exc}", file=sys.stderr)
        return 2
    except (ProtocolError, ConnectionError, OSError, ValueError) as exc:
        print(f"xdup: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - protocol-layer failures
        print(f"xdup: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
