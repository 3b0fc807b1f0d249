"""Command-line entry point: ``wikimemory <command> [options]``.

Exit codes: 0 ok, 2 configuration error, 3 network error, 4 data error.
"""

from __future__ import annotations

import argparse
import fcntl
import logging
import sys
from contextlib import contextmanager, nullcontext
from pathlib import Path

from . import __version__, pipeline
from .client import DEFAULT_ENDPOINT, USER_AGENT_ENV
from .errors import ConfigError, WikiMemoryError
from .store import Month

log = logging.getLogger("wikimemory")

COMMANDS = ("fetch", "salience", "deliberate", "contextualize", "consolidate", "report", "run")


def _month(text: str) -> Month:
    try:
        return Month.parse(text)
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"expected YYYY-MM, got {text!r}") from None


def _k(text: str) -> int | str:
    if text == "auto":
        return text
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--k takes 'auto' or an integer") from None
    if value < 2:
        raise argparse.ArgumentTypeError("--k must be at least 2")
    return value


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--focal-en", default="Arab Spring", help="English focal article title")
    p.add_argument("--focal-ar", default="الربيع العربي", help="Arabic focal article title")
    p.add_argument("--since", type=_month, default=Month(2011, 1), help="first month, YYYY-MM (default 2011-01)")
    p.add_argument("--until", type=_month, default=Month(2024, 3), help="last month, YYYY-MM (default 2024-03)")
    p.add_argument("--cache-dir", type=Path, default=Path("cache"), help="revision cache directory")
    p.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--metric", choices=["jaccard", "cosine"], default="jaccard", help="outlink similarity metric")
    p.add_argument("--k", type=_k, default="auto", help="cluster count, or 'auto' (silhouette over 2..8)")
    p.add_argument("--final-frac", type=float, default=0.1,
                   help="Forgotten when last-period count / peak is at most this (default 0.1)")
    p.add_argument("--toggle-threshold", type=float, default=2.0,
                   help="Debated when members average at least this many transitions (default 2.0)")
    p.add_argument("--ego-config", type=Path, default=None, help="YAML ego configuration (default: bundled)")
    p.add_argument("--endpoint", default=DEFAULT_ENDPOINT, help="API endpoint template with {lang}")
    p.add_argument("--per-revision", action="store_true", help="one column per revision instead of per month")
    p.add_argument("--normalized", action="store_true", help="scale salience lines and per-cluster counts by their peak")
    p.add_argument("--fetch", action="store_true", help="fetch missing data before analysing")
    p.add_argument("--no-redirect-match", action="store_true",
                   help="count only the exact focal title as a link, not its redirects")
    p.add_argument("--rate", type=float, default=1.0, help="API requests per second (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wikimemory",
        description="Salience, deliberation, contextualization and consolidation measures over "
                    "Wikipedia revision histories in two language editions.",
        epilog=f"Fetching requires {USER_AGENT_ENV} (a User-Agent with contact details). "
               "Exit codes: 0 ok, 2 config error, 3 network error, 4 data error.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "fetch": "populate the revision cache",
        "salience": "size and outlink-count series",
        "deliberate": "cluster outlink inclusion vectors",
        "contextualize": "outlinks by interlanguage-link status",
        "consolidate": "related articles linking the focal article",
        "report": "write a hashed index of all outputs",
        "run": "fetch (with --fetch), all four analyses, then report",
    }
    for name in COMMANDS:
        _add_common(sub.add_parser(name, help=helps[name], description=helps[name]))
    return parser


def config_from_args(args: argparse.Namespace) -> pipeline.RunConfig:
    return pipeline.RunConfig(
        focal_en=args.focal_en,
        focal_ar=args.focal_ar,
        since=args.since,
        until=args.until,
        cache_dir=args.cache_dir,
        out_dir=args.out_dir,
        metric=pipeline.SimilarityMetric(args.metric),
        k=args.k,
        final_frac=args.final_frac,
        toggle_threshold=args.toggle_threshold,
        ego_config=args.ego_config,
        endpoint=args.endpoint,
        per_revision=args.per_revision,
        normalized=args.normalized,
        fetch=args.fetch,
        redirect_match=not args.no_redirect_match,
        rate=args.rate,
    )


@contextmanager
def out_dir_lock(out_dir: Path):
    """One process per output directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / ".lock", "a+") as fh:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            raise ConfigError(f"{out_dir} is in use by another wikimemory process") from None
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def dispatch(command: str, cfg: pipeline.RunConfig, client=None) -> list[str]:
    if command == "fetch":
        appended = pipeline.fetch_all(cfg, client)
        return [f"fetch: {len(appended)} articles, {sum(appended.values())} new revisions cached"]
    runners = {
        "salience": pipeline.run_salience,
        "deliberate": pipeline.run_deliberation,
        "contextualize": pipeline.run_contextualization,
        "consolidate": pipeline.run_consolidation,
    }
    if command in runners:
        return [_prefixed(command, runners[command], cfg, client)]
    if command == "report":
        return [pipeline.run_report(cfg)]
    lines = []
    if cfg.fetch:
        pipeline.fetch_all(cfg, client)
        cfg.fetch = False
    for name in ("salience", "deliberate", "contextualize", "consolidate"):
        lines.append(_prefixed(name, runners[name], cfg, client))
    lines.append(pipeline.run_report(cfg))
    return lines


def _prefixed(name, fn, cfg, client):
    try:
        return fn(cfg, client)
    except WikiMemoryError as exc:
        exc.args = (f"{name}: {exc}",)
        raise


def main(argv: list[str] | None = None, client=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        with out_dir_lock(cfg.out_dir) if args.command != "fetch" else nullcontext():
            for line in dispatch(args.command, cfg, client):
                print(line)
    except WikiMemoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
