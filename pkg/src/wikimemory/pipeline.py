"""Run configuration, cache population and the four analyses end to end.

Analyses read only the revision cache and the side caches written by
:func:`fetch_all`; they never touch the network themselves.
"""

from __future__ import annotations

import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import report
from .client import DEFAULT_ENDPOINT, USER_AGENT_ENV, ArticleRef, LangLinkMap, RevisionRecord, WikiClient, parse_timestamp
from .consolidation import (AUTO, ConsolidationMatrix, EgoConfig, EgoTimeline, Kind, RelatedEntry, consolidation_matrix, ego_timeline,
                            focal_title_set, load_ego_config)
from .contextualization import (STATUS_ORDER, Diagnostics, IllTable, classify_all, ill_table,
                                temporal_ill_series)
from .deliberation import (DEFAULT_FINAL_FRAC, DEFAULT_TOGGLE_THRESHOLD, ClusterProfile, SimilarityMetric,
                           build_inclusion_matrix, cluster, cluster_profiles, pairwise_similarity)
from .errors import CacheMiss, ConfigError, NoRevisionInSpan, NothingToReport, PageMissing
from .report import FigureKind, FigureSpec
from .salience import delta_report, outlink_count_series, size_series
from .store import Month, RevisionStore, SnapshotSeries, build_revision_series, build_series, snapshot_rev_ids

log = logging.getLogger(__name__)

LANGS = ("en", "ar")
OTHER = {"en": "ar", "ar": "en"}


@dataclass
class RunConfig:
    focal_en: str = "Arab Spring"
    focal_ar: str = "الربيع العربي"
    since: Month = Month(2011, 1)
    until: Month = Month(2024, 3)
    cache_dir: Path = Path("cache")
    out_dir: Path = Path("out")
    metric: SimilarityMetric = SimilarityMetric.JACCARD
    k: int | str = "auto"
    final_frac: float = DEFAULT_FINAL_FRAC
    toggle_threshold: float = DEFAULT_TOGGLE_THRESHOLD
    ego_config: Path | None = None
    endpoint: str = DEFAULT_ENDPOINT
    per_revision: bool = False
    normalized: bool = False
    fetch: bool = False
    redirect_match: bool = True
    user_agent: str | None = None
    rate: float = 1.0
    top_k: int = 10

    def __post_init__(self):
        if self.since > self.until:
            raise ConfigError(f"span is empty: {self.since} > {self.until}")
        if not self.focal_en.strip() or not self.focal_ar.strip():
            raise ConfigError("focal titles must be non-empty")
        if not 0 < self.final_frac < 1:
            raise ConfigError("--final-frac must lie in (0, 1)")
        if self.toggle_threshold < 0:
            raise ConfigError("--toggle-threshold must be non-negative")
        if self.k != "auto" and (not isinstance(self.k, int) or self.k < 2):
            raise ConfigError("--k must be 'auto' or an integer >= 2")
        self.cache_dir = Path(self.cache_dir)
        self.out_dir = Path(self.out_dir)

    @property
    def span(self) -> tuple[Month, Month]:
        return self.since, self.until

    def focal(self, lang: str) -> ArticleRef:
        return ArticleRef.of(lang, self.focal_en if lang == "en" else self.focal_ar)

    def ego(self) -> EgoConfig:
        cfg = load_ego_config(self.ego_config)
        focal = {"en": self.focal("en"), "ar": self.focal("ar")}
        return EgoConfig(focal, cfg.related)

    def make_client(self) -> WikiClient:
        agent = self.user_agent or os.environ.get(USER_AGENT_ENV)
        if not agent:
            raise ConfigError(f"set {USER_AGENT_ENV} to a User-Agent with contact details before fetching")
        return WikiClient(agent, endpoint=self.endpoint, rate=self.rate)


# ---------------------------------------------------------------------------
# fetching


def _aux(store: RevisionStore, name: str, lang: str) -> dict:
    try:
        return store.get_json(name, lang)
    except CacheMiss:
        return {}


def resolve_title(client: WikiClient, store: RevisionStore, ref: ArticleRef) -> ArticleRef:
    """Redirect target of ``ref``, memoised in the side cache."""
    known = _aux(store, "titles", ref.lang)
    if ref.title in known:
        if known[ref.title] is None:
            raise PageMissing(ref.lang, ref.title)
        return ArticleRef(ref.lang, known[ref.title])
    try:
        resolved = client.resolve_redirect(ref)
    except PageMissing:
        store.update_json("titles", ref.lang, {ref.title: None})
        raise
    store.update_json("titles", ref.lang, {ref.title: resolved.title})
    return resolved


def cached_title(store: RevisionStore, ref: ArticleRef) -> ArticleRef:
    known = _aux(store, "titles", ref.lang)
    target = known.get(ref.title, ref.title)
    if target is None:
        raise PageMissing(ref.lang, ref.title)
    return ArticleRef(ref.lang, target)


def fetch_history(client: WikiClient, store: RevisionStore, ref: ArticleRef,
                  span: tuple[Month, Month], full_content: bool = False) -> int:
    """Bring the cached history of ``ref`` up to ``span``; returns records appended.

    Monthly analyses only need the wikitext of each month's last revision, so
    the rest is cached as metadata unless ``full_content`` is set.
    """
    since, until = span[0].start(), span[1].end()
    try:
        meta = store.meta(ref)
        cached = store.get(ref)
    except CacheMiss:
        meta, cached = None, []
    if meta is not None and meta.since and parse_timestamp(meta.since) > since:
        cached = []
        meta = None
    if meta is not None and meta.until and parse_timestamp(meta.until) >= until:
        if not full_content or all(r.wikitext is not None for r in cached):
            return 0
    start = cached[-1].timestamp + timedelta(seconds=1) if cached else since
    fresh: list[RevisionRecord] = []
    if start <= until:
        fresh = client.fetch_revisions(ref, start, until, with_content=full_content)
    if not full_content:
        wanted = set(snapshot_rev_ids(cached + fresh, span)) - {r.rev_id for r in cached}
        texts = client.fetch_contents(ref.lang, wanted) if wanted else {}
        fresh = [RevisionRecord(r.rev_id, r.timestamp, len(texts[r.rev_id].encode("utf-8")), texts[r.rev_id])
                 if r.rev_id in texts else r for r in fresh]
    if meta is None:
        store.replace(ref, fresh, since, until)
    else:
        store.put(ref, fresh, since, until)
    return len(fresh)


def _focal_outlink_titles(store: RevisionStore, ref: ArticleRef, span, per_revision: bool) -> tuple[set[str], set[str]]:
    """(every outlink ever seen in the span, outlinks of the latest snapshot)."""
    series = load_series(store, ref, span, per_revision)
    union: set[str] = set()
    for snap in series:
        union |= snap.outlinks.titles
    return union, set(series[-1].outlinks.titles)


def fetch_all(cfg: RunConfig, client: WikiClient | None = None, workers: int = 4) -> dict[str, int]:
    """Populate every cache the analyses read. Safe to re-run; resumes from the cache."""
    client = client or cfg.make_client()
    store = RevisionStore(cfg.cache_dir)
    appended: dict[str, int] = {}
    focal = {}
    for lang in LANGS:
        ref = resolve_title(client, store, cfg.focal(lang))
        focal[lang] = ref
        appended[str(ref)] = fetch_history(client, store, ref, cfg.span, full_content=cfg.per_revision)

    # interlanguage links and redirect targets for every focal outlink
    outlinks = {lang: _focal_outlink_titles(store, focal[lang], cfg.span, cfg.per_revision) for lang in LANGS}
    for lang in LANGS:
        langlinks = _aux(store, "langlinks", lang)
        todo = sorted(outlinks[lang][0] - set(langlinks))
        if todo:
            for title, links in client.fetch_langlinks_batch(lang, todo).items():
                langlinks[title] = None if links is None else links.links
            store.put_json("langlinks", lang, langlinks)
        resolved = _aux(store, "resolved", lang)
        todo = sorted(outlinks[lang][1] - set(resolved))
        if todo:
            resolved.update(client.resolve_redirects_batch(lang, todo))
            store.put_json("resolved", lang, resolved)

    # related articles for the ego networks
    ego = cfg.ego()
    redirects = {}
    for lang in LANGS:
        cached = _aux(store, "redirects", lang)
        if focal[lang].title not in cached:
            cached[focal[lang].title] = client.fetch_redirects(focal[lang])
            store.put_json("redirects", lang, cached)
        redirects[lang] = cached
    ego_titles = _aux(store, "ego_titles", "all")
    for entry in ego.related:
        for lang, title in entry.titles.items():
            key = f"{entry.label}|{lang}"
            if title != AUTO or key in ego_titles:
                continue
            source = next((ArticleRef.of(l, t) for l, t in entry.titles.items() if t not in (None, AUTO)), None)
            mapped = None
            if source is not None:
                try:
                    mapped = client.fetch_langlinks(resolve_title(client, store, source)).get(lang)
                except PageMissing:
                    mapped = None
            ego_titles[key] = mapped
    store.put_json("ego_titles", "all", ego_titles)
    ego = resolved_ego(cfg, store)

    jobs = [entry.ref(lang) for entry in ego.related for lang in LANGS if entry.ref(lang) is not None]

    def job(ref: ArticleRef) -> tuple[str, int]:
        try:
            target = resolve_title(client, store, ref)
        except PageMissing:
            log.warning("related article %s does not exist", ref)
            return str(ref), 0
        return str(target), fetch_history(client, store, target, cfg.span)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for name, n in pool.map(job, jobs):
            appended[name] = n
    return appended


def resolved_ego(cfg: RunConfig, store: RevisionStore) -> EgoConfig:
    ego = cfg.ego()
    ego_titles = _aux(store, "ego_titles", "all")
    mapping = {}
    for entry in ego.related:
        for lang, title in entry.titles.items():
            if title == AUTO:
                mapping[(entry.label, lang)] = ego_titles.get(f"{entry.label}|{lang}")
    return ego.with_titles(mapping)


# ---------------------------------------------------------------------------
# loading


def load_series(store: RevisionStore, ref: ArticleRef, span, per_revision: bool = False) -> SnapshotSeries:
    revisions = store.get(ref)
    if per_revision:
        return build_revision_series(revisions, ref, span)
    return build_series(revisions, ref, span)


def _focal_series(cfg: RunConfig, store: RevisionStore, lang: str) -> SnapshotSeries:
    return load_series(store, cached_title(store, cfg.focal(lang)), cfg.span, cfg.per_revision)


def _maybe_fetch(cfg: RunConfig, client: WikiClient | None) -> None:
    if cfg.fetch:
        fetch_all(cfg, client)


# ---------------------------------------------------------------------------
# analyses


def run_salience(cfg: RunConfig, client: WikiClient | None = None) -> str:
    _maybe_fetch(cfg, client)
    store = RevisionStore(cfg.cache_dir)
    sizes, counts = {}, {}
    summary = []
    for lang in LANGS:
        series = _focal_series(cfg, store, lang)
        size, count = size_series(series), outlink_count_series(series)
        sizes[lang], counts[lang] = size, count
        report.write_csv(cfg.out_dir, "salience", lang, ["month", "metric", "value"],
                         size.csv_rows() + count.csv_rows())
        rows = [(size.metric.value, m, d) for m, d in delta_report(size, cfg.top_k)]
        rows += [(count.metric.value, m, d) for m, d in delta_report(count, cfg.top_k)]
        report.write_csv(cfg.out_dir, "salience", f"{lang}_deltas", ["metric", "month", "delta"], rows)
        summary.append(f"{lang}: {len(series)} periods, size {size.values[0]}→{size.values[-1]} B, "
                       f"outlinks {count.values[0]}→{count.values[-1]}")
    for name, data, ylabel in (("size", sizes, "bytes"), ("outlinks", counts, "outlinks")):
        spec = FigureSpec(FigureKind.LINE, f"Article {name} over time",
                          report.LineData({lang: ts.points for lang, ts in data.items()}, ylabel),
                          normalized=cfg.normalized)
        report.write_figure(cfg.out_dir, "salience", name, spec)
    return "salience: " + "; ".join(summary)


@dataclass
class DeliberationResult:
    lang: str
    k: int
    profiles: list[ClusterProfile]
    silhouettes: dict[int, float] = field(default_factory=dict)


def deliberate_series(cfg: RunConfig, series: SnapshotSeries) -> tuple[DeliberationResult, dict]:
    lang = series.article.lang
    m = build_inclusion_matrix(series)
    sim = pairwise_similarity(m, cfg.metric)
    assignment = cluster(sim, cfg.k)
    profiles = cluster_profiles(m, assignment, cfg.final_frac, cfg.toggle_threshold)
    result = DeliberationResult(lang, assignment.k, profiles, assignment.silhouettes)
    return result, {"matrix": m, "similarity": sim, "assignment": assignment}


def run_deliberation(cfg: RunConfig, client: WikiClient | None = None) -> str:
    _maybe_fetch(cfg, client)
    store = RevisionStore(cfg.cache_dir)
    summary = []
    for lang in LANGS:
        series = _focal_series(cfg, store, lang)
        result, parts = deliberate_series(cfg, series)
        m, sim, a = parts["matrix"], parts["similarity"], parts["assignment"]
        out = cfg.out_dir
        report.write_csv(out, "deliberation", f"{lang}_inclusion", ["outlink", "month", "included"], m.csv_rows())
        report.write_csv(out, "deliberation", f"{lang}_similarity", ["outlink", *sim.labels],
                         ([t, *(f"{v:.6f}" for v in row)] for t, row in zip(sim.labels, sim.values)))
        report.write_csv(out, "deliberation", f"{lang}_clusters", ["outlink", "cluster"],
                         ((t, a.labels[t]) for t in a.order))
        report.write_csv(out, "deliberation", f"{lang}_profiles",
                         ["cluster", "month", "count", "normalized"],
                         ((p.cluster_id, month, c, f"{c / (p.peak or 1):.4f}")
                          for p in result.profiles for month, c in p.series))
        report.write_csv(out, "deliberation", f"{lang}_classification",
                         ["cluster", "size", "classification", "final_frac", "mean_toggles"],
                         ((p.cluster_id, p.size, p.classification.value, f"{p.final_frac:.4f}",
                           f"{p.mean_toggles:.4f}") for p in result.profiles))
        if result.silhouettes:
            report.write_csv(out, "deliberation", f"{lang}_silhouette", ["k", "silhouette"],
                             ((k, f"{s:.6f}") for k, s in sorted(result.silhouettes.items())))
        index = {t: i for i, t in enumerate(sim.labels)}
        order = [index[t] for t in a.order]
        bounds = [i for i in range(1, len(a.order)) if a.labels[a.order[i]] != a.labels[a.order[i - 1]]]
        heat = report.HeatmapData(list(a.order), list(a.order), sim.values[np.ix_(order, order)], bounds)
        report.write_figure(out, "deliberation", f"{lang}_heatmap",
                            FigureSpec(FigureKind.HEATMAP, f"{lang}: outlink similarity ({cfg.metric.value})", heat))
        lines = report.LineData({f"{p.cluster_id} {p.classification.value}": p.series for p in result.profiles},
                                "outlinks included")
        report.write_figure(out, "deliberation", f"{lang}_clusters",
                            FigureSpec(FigureKind.LINE, f"{lang}: outlinks included per cluster", lines,
                                       normalized=cfg.normalized))
        labels = ", ".join(f"{p.cluster_id}={p.classification.value}" for p in result.profiles)
        summary.append(f"{lang}: k={result.k} ({labels})")
    return "deliberation: " + "; ".join(summary)


def _langlink_fetcher(store: RevisionStore, lang: str):
    table = _aux(store, "langlinks", lang)

    def fetch(ref: ArticleRef) -> LangLinkMap:
        if ref.title not in table:
            raise CacheMiss(f"no cached interlanguage links for {ref} (run fetch)")
        links = table[ref.title]
        if links is None:
            raise PageMissing(ref.lang, ref.title)
        return LangLinkMap(ref, {k: v for k, v in links.items() if k != ref.lang})

    return fetch


def _resolver(store: RevisionStore, lang: str):
    table = _aux(store, "resolved", lang)

    def resolve(title: str) -> str:
        target = table.get(title)
        return target if target else title

    return resolve


def contextualize(cfg: RunConfig, store: RevisionStore) -> tuple[IllTable, dict, dict, Diagnostics]:
    series = {lang: _focal_series(cfg, store, lang) for lang in LANGS}
    current = {lang: set(series[lang][-1].outlinks.titles) for lang in LANGS}
    diag = Diagnostics()
    current_status, all_status = {}, {}
    for lang in LANGS:
        other = OTHER[lang]
        fetcher = _langlink_fetcher(store, lang)
        resolve = _resolver(store, other)
        matrix = build_inclusion_matrix(series[lang])
        statuses = classify_all(matrix.outlinks, lang, other, fetcher, current[other], resolve, diag)
        all_status[lang] = (matrix, statuses)
        current_status[(lang, other)] = {t: statuses[t] for t in current[lang]}
    return ill_table(current_status), all_status, current_status, diag


def run_contextualization(cfg: RunConfig, client: WikiClient | None = None) -> str:
    _maybe_fetch(cfg, client)
    store = RevisionStore(cfg.cache_dir)
    table, all_status, _, diag = contextualize(cfg, store)
    out = cfg.out_dir
    report.write_csv(out, "contextualization", "ill_status", ["outlink", "direction", "status"],
                     ((t, f"{lang}->{OTHER[lang]}", s.value)
                      for lang in LANGS for t, s in sorted(all_status[lang][1].items())))
    rows = table.rows()
    report.write_figure(out, "contextualization", "ill_table",
                        FigureSpec(FigureKind.TABLE, "Outlinks by ILL status", report.TableData(rows[0], rows[1:])))
    for lang in LANGS:
        matrix, statuses = all_status[lang]
        stacked = temporal_ill_series(matrix, statuses)
        report.write_csv(out, "contextualization", f"{lang}_temporal", ["month", "status", "count"],
                         stacked.csv_rows())
        data = report.StackedData(list(stacked.months), {s.value: stacked.counts[s] for s in STATUS_ORDER})
        report.write_figure(out, "contextualization", f"{lang}_temporal",
                            FigureSpec(FigureKind.STACKED_AREA, f"{lang}: outlinks by ILL status in {OTHER[lang]}",
                                       data))
    if diag.red_links:
        report.write_csv(out, "contextualization", "red_links", ["outlink"], ([t] for t in sorted(diag.red_links)))
    parts = []
    for d in table.directions:
        split = "/".join(str(d.counts[s]) for s in STATUS_ORDER)
        parts.append(f"{d.lang}->{d.other_lang} {split} of {d.total}")
    return "contextualization: " + "; ".join(parts) + f"; red links {len(diag.red_links)}"


def consolidate(cfg: RunConfig, store: RevisionStore) -> dict[str, ConsolidationMatrix]:
    ego = resolved_ego(cfg, store)
    redirects = {lang: _aux(store, "redirects", lang) for lang in LANGS}
    out = {}
    for lang in LANGS:
        focal = cached_title(store, cfg.focal(lang))
        extra = redirects[lang].get(focal.title, []) if cfg.redirect_match else []
        titles = focal_title_set(focal, extra, [cfg.focal(lang).title])
        timelines = {}
        for entry in ego.related:
            ref = entry.ref(lang)
            if ref is None:
                continue
            try:
                series = load_series(store, cached_title(store, ref), cfg.span)
            except NoRevisionInSpan:
                # exists, but only after the span: every month is "not created"
                timelines[entry.label] = EgoTimeline(entry.label, lang, ())
                continue
            except (CacheMiss, PageMissing):
                continue
            timelines[entry.label] = ego_timeline(series, titles, entry.label)
        missing = [e for e in ego.related if e.ref(lang) is not None and e.label not in timelines]
        if missing:
            ego = EgoConfig(ego.focal, tuple(
                e if e not in missing else RelatedEntry(e.label, e.kind, {**e.titles, lang: None}) for e in ego.related))
        out[lang] = consolidation_matrix(ego, lang, timelines, cfg.span)
    return out


def run_consolidation(cfg: RunConfig, client: WikiClient | None = None) -> str:
    _maybe_fetch(cfg, client)
    store = RevisionStore(cfg.cache_dir)
    matrices = consolidate(cfg, store)
    summary = []
    for lang, cm in matrices.items():
        report.write_csv(cfg.out_dir, "consolidation", f"{lang}_matrix", ["related", "kind", "month", "state"],
                         cm.csv_rows())
        for kind, name in ((Kind.COUNTRY, "countries"), (Kind.EVENT, "events")):
            sub = cm.subset(kind)
            data = report.TimelineData(list(sub.labels), list(sub.months), sub.included, sub.created)
            report.write_figure(cfg.out_dir, "consolidation", f"{lang}_{name}",
                                FigureSpec(FigureKind.TIMELINE_BARS, f"{lang}: links to the focal article ({name})",
                                           data))
        ever = int(cm.included.any(axis=1).sum())
        summary.append(f"{lang}: {ever}/{len(cm.labels)} related articles ever link the focal article")
    return "consolidation: " + "; ".join(summary)


INDEX_NAME = "index.md"


def run_report(cfg: RunConfig) -> str:
    out = Path(cfg.out_dir)
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != INDEX_NAME
                   and not p.name.startswith(".")) if out.exists() else []
    if not files:
        raise NothingToReport(f"no outputs under {out}")
    lines = ["# wikimemory outputs", "", "| file | sha256 |", "| --- | --- |"]
    for p in files:
        rel = p.relative_to(out).as_posix()
        digest = hashlib.sha256(p.read_bytes()).hexdigest()
        lines.append(f"| [{rel}]({rel}) | `{digest}` |")
    report.write_text(out / INDEX_NAME, "\n".join(lines) + "\n")
    return f"report: indexed {len(files)} files in {out / INDEX_NAME}"


def parse_index(path: Path) -> dict[str, str]:
    """file → sha256 from an index written by :func:`run_report`."""
    out = {}
    for line in Path(path).read_text("utf-8").splitlines():
        if line.startswith("| ["):
            rel = line.split("](", 1)[1].split(")", 1)[0]
            out[rel] = line.rsplit("`", 2)[1]
    return out
