"""Command-line entry point: ``casper {sanitize,attack,audit,sweep,table}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 audit failure.
A JSON file given with ``--config`` supplies defaults for any flag (keys
are the long flag names with dashes turned into underscores); flags given
on the command line take precedence.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import logging
import sys

from . import corpus as corpus_mod
from .embeddings import EmptyTable, MalformedLine, load_table
from .evaluation import (
    AUDIT_INSTANCES,
    InsufficientSupport,
    attack_pr_at_k,
    dp_audit,
    parameter_sweep,
    write_sweep_csv,
)
from .mechanisms import KINDS, MechanismConfig, SanitizationError
from .noise import parse_seed

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_AUDIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _seed(text):
    try:
        return parse_seed(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="casper", description="Token-level metric-DP text sanitisation.",
                     formatter_class=fmt)
    parser.add_argument("--config", help="JSON file with default flag values")
    parser.add_argument("--log-level", default="WARNING", help="logging level for stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def table_args(p):
        # required, but checked after parsing so --config can supply it
        p.add_argument("--embeddings", default=None,
                       help="GloVe-format text file (.gz accepted); required")
        p.add_argument("--limit", type=int, default=None, help="read at most this many rows")
        p.add_argument("--normalize", action="store_true", default=False,
                       help="scale rows to unit Euclidean norm")

    def mech_args(p, default_kind):
        p.add_argument("--mechanism", choices=KINDS, default=default_kind, help="mechanism kind")
        p.add_argument("--eta", type=float, default=None,
                       help="Laplace noise scale (casper, dchi_noise)")
        p.add_argument("--epsilon", type=float, default=None,
                       help="exponential-mechanism scale (santext, custext)")
        p.add_argument("--sigma", type=float, default=None, help="Gaussian window width")
        p.add_argument("--window", type=int, default=None, help="window length L (positions)")
        p.add_argument("--top-k", type=int, default=None, help="custext candidate pool size")
        p.add_argument("--exclude-original", action=argparse.BooleanOptionalAction,
                       default=None,
                       help="bar the original token at un-embedding; None means on for convdef only")
        p.add_argument("--max-vocab", type=int, default=500_000,
                       help="refuse santext on larger vocabularies")
        p.add_argument("--seed", type=_seed, default=0, help="master seed (decimal or 0x-hex)")

    def io_args(p):
        p.add_argument("--input", default="-", help="input path, '-' for stdin")
        p.add_argument("--output", default="-", help="output path, '-' for stdout")

    p = sub.add_parser("sanitize", help="sanitise a JSONL/TSV corpus", formatter_class=fmt)
    table_args(p)
    mech_args(p, "casper")
    io_args(p)
    p.add_argument("--format", choices=("auto", "jsonl", "tsv"), default="auto",
                   help="input record format")
    p.add_argument("--stopwords", default=None, help="stopword file; None uses the bundled English list")
    p.add_argument("--case-sensitive-stopwords", action="store_true", default=False,
                   help="match stopwords without case folding")
    p.add_argument("--lowercase", action="store_true", default=False,
                   help="fold case before embedding lookup")
    p.add_argument("--threads", type=int, default=None, help="worker threads; None uses every core")
    p.add_argument("--chunk-size", type=int, default=256, help="sentences per NN batch")

    p = sub.add_parser("attack", help="nearest-neighbour reconstruction attack",
                       formatter_class=fmt)
    table_args(p)
    io_args(p)
    p.add_argument("--k", type=int, default=5, help="neighbours considered")
    p.add_argument("--k-max", type=int, default=None, help="report the curve up to this k")
    p.add_argument("--lowercase", action="store_true", default=False,
                   help="fold case of originals before lookup")

    p = sub.add_parser("audit", help="Monte-Carlo metric-DP audit on a tiny instance",
                       formatter_class=fmt)
    p.add_argument("--instance", choices=sorted(AUDIT_INSTANCES), default="tiny4x2",
                   help="built-in audit instance")
    p.add_argument("--mechanism", choices=KINDS, default="dchi_noise", help="mechanism kind")
    p.add_argument("--epsilon", type=float, default=1.0,
                   help="privacy parameter (noise scale eta for noise mechanisms)")
    p.add_argument("--sigma", type=float, default=1.0, help="Gaussian window width")
    p.add_argument("--window", type=int, default=3, help="window length L")
    p.add_argument("--top-k", type=int, default=2, help="custext pool size")
    p.add_argument("--trials", type=int, default=1_000_000, help="runs per input")
    p.add_argument("--min-support", type=int, default=1000,
                   help="hits needed under both inputs for an output to count")
    p.add_argument("--distance", choices=("d2", "cosine"), default="d2",
                   help="distance in the bound")
    p.add_argument("--normalize", action="store_true", default=False,
                   help="unit-normalise the instance embeddings")
    p.add_argument("--noise-multiplier", type=float, default=1.0,
                   help="scale the noise actually added (audit stays at nominal epsilon)")
    p.add_argument("--check", choices=("full", "interior"), default="full",
                   help="which bound decides the exit code")
    p.add_argument("--seed", type=_seed, default=0, help="seed (decimal or 0x-hex)")
    p.add_argument("--output", default="-", help="report path, '-' for stdout")

    p = sub.add_parser("sweep", help="grid over sigma, L and eta", formatter_class=fmt)
    table_args(p)
    io_args(p)
    p.add_argument("--mechanism", choices=("casper", "convdef"), default="casper",
                   help="context mechanism to sweep")
    p.add_argument("--sigmas", type=_float_list, default=[0.5, 0.75, 1.0], help="sigma values")
    p.add_argument("--windows", type=_int_list, default=[4, 5], help="window lengths")
    p.add_argument("--etas", type=_float_list, default=[10.0, 50.0, 100.0], help="eta values")
    p.add_argument("--k", type=int, default=5, help="attack neighbours")
    p.add_argument("--exclude-original", action=argparse.BooleanOptionalAction, default=None,
                   help="bar the original token at un-embedding")
    p.add_argument("--stopwords", default=None, help="stopword file; None uses the bundled English list")
    p.add_argument("--lowercase", action="store_true", default=False,
                   help="fold case before lookup")
    p.add_argument("--max-sentences", type=int, default=None, help="use the first N records")
    p.add_argument("--seed", type=_seed, default=0, help="master seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads per cell")

    p = sub.add_parser("table", help="inspect an embedding file", formatter_class=fmt)
    table_args(p)
    p.add_argument("--sample", type=int, default=5, help="rows to print")
    p.add_argument("--output", default="-", help="output path, '-' for stdout")
    return parser


def _parse(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            with open(known.config, encoding="utf-8") as fh:
                defaults = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {known.config}: {exc}")
        if not isinstance(defaults, dict):
            raise UsageError("config file must hold a JSON object")
        cmd = next((a for a in argv if a in parser._subparsers._group_actions[0].choices), None)
        if cmd is not None:
            subparser = parser._subparsers._group_actions[0].choices[cmd]
            valid = {a.dest for a in subparser._actions}
            unknown = set(defaults) - valid - {"config", "log_level"}
            if unknown:
                raise UsageError(f"unknown config keys for {cmd}: {', '.join(sorted(unknown))}")
            if "seed" in defaults:
                defaults["seed"] = parse_seed(defaults["seed"])
            subparser.set_defaults(**defaults)
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required (sanitize, attack, audit, sweep, table)")
    if getattr(args, "embeddings", "x") is None:
        raise UsageError("--embeddings is required")
    return args


@contextlib.contextmanager
def _open_in(path, stdin):
    if path == "-":
        yield stdin
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            yield fh


@contextlib.contextmanager
def _open_out(path, stdout):
    if path == "-":
        yield stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _mechanism_config(args) -> MechanismConfig:
    try:
        return MechanismConfig(args.mechanism, eta=args.eta, epsilon=args.epsilon,
                               sigma=args.sigma, window=args.window, top_k=args.top_k,
                               exclude_original=args.exclude_original,
                               normalize_embeddings=args.normalize, seed=args.seed,
                               max_vocab=args.max_vocab)
    except ValueError as exc:
        raise UsageError(str(exc))


def _load(args):
    return load_table(args.embeddings, limit=args.limit, normalize=args.normalize)


def _cmd_sanitize(args, stdin, stdout, stderr):
    config = _mechanism_config(args)
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads must be positive")
    if args.stopwords:
        stop = corpus_mod.load_stopwords(args.stopwords, args.case_sensitive_stopwords)
    else:
        stop = corpus_mod.default_stopwords(args.case_sensitive_stopwords)
    table = _load(args)
    if config.kind == "santext" and len(table) > config.max_vocab:
        raise UsageError(f"santext over {len(table)} tokens exceeds --max-vocab {config.max_vocab}")
    with _open_in(args.input, stdin) as fin, _open_out(args.output, stdout) as fout:
        records = corpus_mod.read_records(fin, args.format)
        stream, stats = corpus_mod.sanitize_corpus(records, table, config, stop,
                                                   threads=args.threads,
                                                   lowercase=args.lowercase,
                                                   chunk_size=args.chunk_size)
        corpus_mod.write_records(stream, fout)
    stderr.write(json.dumps(stats.to_dict()) + "\n")
    return EXIT_OK


def _cmd_attack(args, stdin, stdout, stderr):
    if args.k < 1:
        raise UsageError("--k must be positive")
    table = _load(args)
    with _open_in(args.input, stdin) as fin:
        records = list(corpus_mod.read_sanitized(fin))
    report = attack_pr_at_k(records, table, args.k, args.k_max, lowercase=args.lowercase)
    with _open_out(args.output, stdout) as fout:
        fout.write(json.dumps(report.to_dict()) + "\n")
    return EXIT_OK


def _cmd_audit(args, stdin, stdout, stderr):
    if args.trials < 1 or args.min_support < 1:
        raise UsageError("--trials and --min-support must be positive")
    if not args.epsilon > 0:
        raise UsageError("--epsilon must be positive")
    try:
        config = MechanismConfig(args.mechanism, eta=args.epsilon, epsilon=args.epsilon,
                                 sigma=args.sigma, window=args.window, top_k=args.top_k,
                                 normalize_embeddings=args.normalize, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    inst = AUDIT_INSTANCES[args.instance]
    report = dp_audit(config, inst.x, inst.x_prime, inst.table(), args.epsilon, args.trials,
                      args.min_support, distance=args.distance, seed=args.seed,
                      noise_multiplier=args.noise_multiplier)
    with _open_out(args.output, stdout) as fout:
        fout.write(json.dumps(report.to_dict()) + "\n")
    if args.check == "interior":
        if report.interior_passed is None:
            raise UsageError("interior bound does not apply to this instance/mechanism")
        ok = report.interior_passed
    else:
        ok = report.passed
    return EXIT_OK if ok else EXIT_AUDIT


def _cmd_sweep(args, stdin, stdout, stderr):
    if not (args.sigmas and args.windows and args.etas):
        raise UsageError("every grid axis needs at least one value")
    stop = corpus_mod.load_stopwords(args.stopwords) if args.stopwords else None
    table = _load(args)
    sentences = []
    with _open_in(args.input, stdin) as fin:
        for item in corpus_mod.read_records(fin):
            if isinstance(item, corpus_mod.BadRecord):
                continue
            sentences.append(item["tokens"] if "tokens" in item
                             else corpus_mod.tokenize(item["text"]))
            if args.max_sentences and len(sentences) >= args.max_sentences:
                break
    rows = parameter_sweep(args.sigmas, args.windows, args.etas, sentences, table, k=args.k,
                           stopwords=stop, master_seed=args.seed, kind=args.mechanism,
                           exclude_original=args.exclude_original, lowercase=args.lowercase,
                           threads=args.threads)
    with _open_out(args.output, stdout) as fout:
        write_sweep_csv(rows, fout)
    return EXIT_OK


def _cmd_table(args, stdin, stdout, stderr):
    table = _load(args)
    info = {
        "vocab_size": len(table),
        "dim": table.dim,
        "normalized": table.normalized,
        "duplicates": table.duplicates,
        "sample": [{"token": t, "vector": table.matrix[i].tolist()}
                   for i, t in enumerate(table.tokens[: max(0, args.sample)])],
    }
    with _open_out(args.output, stdout) as fout:
        fout.write(json.dumps(info) + "\n")
    return EXIT_OK


_COMMANDS = {
    "sanitize": _cmd_sanitize,
    "attack": _cmd_attack,
    "audit": _cmd_audit,
    "sweep": _cmd_sweep,
    "table": _cmd_table,
}


def run_cli(argv, stdin=None, stdout=None, stderr=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    try:
        with contextlib.redirect_stdout(stdout):  # --help prints via sys.stdout
            args = _parse(list(argv))
    except UsageError as exc:
        stderr.write(f"casper: error: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    handler = logging.StreamHandler(stderr)
    root = logging.getLogger("casper")
    root.addHandler(handler)
    root.setLevel(str(args.log_level).upper())
    try:
        return _COMMANDS[args.command](args, stdin, stdout, stderr)
    except UsageError as exc:
        stderr.write(f"casper: error: {exc}\n")
        return EXIT_USAGE
    except (MalformedLine, EmptyTable, corpus_mod.CorpusError, InsufficientSupport,
            SanitizationError, OSError, UnicodeDecodeError, KeyError, ValueError) as exc:
        stderr.write(f"casper: data error: {exc}\n")
        return EXIT_DATA
    finally:
        root.removeHandler(handler)


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
