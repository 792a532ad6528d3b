"""Corpus-level statistics over a directory of per-app reports.

Reports are joined with corpus metadata on sha256, optionally filtered by
popularity / recency / category, and reduced to the result tables: per-API
prevalence, match-location splits, top library rankings, per-category
shares, and crypto library counts. Machine CSV output keeps full float
precision; rounding to presentation form is left to the caller.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from . import defaults
from .attribution import load_known_prefixes, normalize_library, parse_package
from .errors import DuplicateSha256Error
from .matchers import TEE_DETECTORS
from .pipeline import load_corpus_csv
from .report import STATUS_OK, read_report_document

LOCATIONS = ("inmain", "inlib", "obfuscated")


@dataclass
class CorpusRecord:
    sha256: str
    status: str
    package: str
    matches: list[dict]
    crypto_libs: list[str]
    native_libs: list[dict]
    category: str | None = None
    downloads: int | None = None
    last_update: date | None = None

    def tee_matches(self) -> list[dict]:
        return [m for m in self.matches if m["detector"] in TEE_DETECTORS]


@dataclass
class Corpus:
    records: list[CorpusRecord]
    unmatched_metadata: int = 0

    def ok_records(self) -> list[CorpusRecord]:
        return [r for r in self.records if r.status == STATUS_OK]


@dataclass(frozen=True)
class SelectionFilter:
    min_downloads: int = 10_000
    min_last_update: date = date(2020, 1, 1)
    excluded_categories: frozenset[str] = field(
        default_factory=defaults.load_game_categories)

    def __post_init__(self):
        if self.min_downloads < 0:
            raise ValueError("min_downloads must be non-negative")

    def keeps(self, record: CorpusRecord) -> bool:
        if (record.downloads or 0) < self.min_downloads:
            return False
        if (record.last_update or date.min) < self.min_last_update:
            return False
        if record.category in self.excluded_categories:
            return False
        return True


def load_corpus(report_dir, corpus_csv=None) -> Corpus:
    """Join report files with metadata rows on sha256.

    Reports without a metadata row stay in the corpus with null category;
    metadata rows without a report are counted and otherwise ignored.
    """
    report_dir = Path(report_dir)
    meta_by_sha: dict[str, object] = {}
    if corpus_csv is not None:
        for entry in load_corpus_csv(corpus_csv):
            if entry.sha256 in meta_by_sha:
                raise DuplicateSha256Error(entry.sha256)
            meta_by_sha[entry.sha256] = entry

    records = []
    seen = set()
    for path in sorted(report_dir.glob("*.json")):
        doc = read_report_document(path)
        meta = doc.get("meta", {})
        sha = meta.get("sha256", path.stem)
        if sha in seen:
            raise DuplicateSha256Error(sha)
        seen.add(sha)
        entry = meta_by_sha.get(sha)
        records.append(CorpusRecord(
            sha256=sha,
            status=meta.get("status", "error"),
            package=meta.get("package", ""),
            matches=doc.get("matches", []),
            crypto_libs=doc.get("crypto_libs", []),
            native_libs=doc.get("native_libs", []),
            category=entry.category if entry else None,
            downloads=entry.downloads if entry else None,
            last_update=entry.last_update if entry else None))

    unmatched = sum(1 for sha in meta_by_sha if sha not in seen)
    return Corpus(records=records, unmatched_metadata=unmatched)


def apply_filter(corpus: Corpus, selection: SelectionFilter) -> Corpus:
    return Corpus(records=[r for r in corpus.records if selection.keeps(r)],
                  unmatched_metadata=corpus.unmatched_metadata)


def _share(count: int, total: int) -> float:
    return count / total if total else 0.0


def api_prevalence(corpus: Corpus) -> dict:
    """Per-detector app counts and shares over successfully analyzed apps.

    An app counts once per detector no matter how many matches it has.
    Intersections mirror the result table: all four detectors, and all
    detectors except the rarely present confirmation dialog one.
    """
    ok = corpus.ok_records()
    detectors_per_app = []
    for record in ok:
        detectors_per_app.append({m["detector"] for m in record.tee_matches()})

    counts = {d: sum(1 for s in detectors_per_app if d in s)
              for d in TEE_DETECTORS}
    any_count = sum(1 for s in detectors_per_app if s)
    all_four = sum(1 for s in detectors_per_app if len(s) == len(TEE_DETECTORS))
    non_pc = [d for d in TEE_DETECTORS if d != "protected_confirmation"]
    all_excl_pc = sum(1 for s in detectors_per_app if set(non_pc) <= s)

    return {
        "ok_apps": len(ok),
        "per_api": {d: {"apps": counts[d], "share": _share(counts[d], len(ok))}
                    for d in TEE_DETECTORS},
        "any_api": {"apps": any_count, "share": _share(any_count, len(ok))},
        "no_api": {"apps": len(ok) - any_count,
                   "share": _share(len(ok) - any_count, len(ok))},
        "all_four": {"apps": all_four, "share": _share(all_four, len(ok))},
        "all_excl_protected_confirmation": {
            "apps": all_excl_pc, "share": _share(all_excl_pc, len(ok))},
    }


def location_split(corpus: Corpus, known_prefixes=None) -> dict:
    """Where matches live: per-match location shares plus per-app views.

    App-level shares are relative to apps that have at least one detector
    match. The libraries-per-app distribution counts distinct normalized
    libraries among apps that have at least one library-located match.
    """
    if known_prefixes is None:
        known_prefixes = load_known_prefixes(
            defaults.default_known_prefixes_path())
    ok = corpus.ok_records()

    match_counts = {loc: 0 for loc in LOCATIONS}
    matched_apps = 0
    apps_with = {loc: 0 for loc in LOCATIONS}
    exclusively_inmain = 0
    libs_per_app = []
    for record in ok:
        tee = record.tee_matches()
        if not tee:
            continue
        matched_apps += 1
        locations = [m["location"] for m in tee]
        for loc in locations:
            if loc in match_counts:
                match_counts[loc] += 1
        for loc in LOCATIONS:
            if loc in locations:
                apps_with[loc] += 1
        if all(loc == "inmain" for loc in locations):
            exclusively_inmain += 1
        inlib_libs = {normalize_library(parse_package(m["package"]),
                                        known_prefixes)
                      for m in tee if m["location"] == "inlib"}
        if inlib_libs:
            libs_per_app.append(len(inlib_libs))

    total_matches = sum(match_counts.values())
    return {
        "ok_apps": len(ok),
        "matched_apps": matched_apps,
        "match_counts": match_counts,
        "total_matches": total_matches,
        "inlib_match_share": _share(match_counts["inlib"], total_matches),
        "apps_with_inlib_share": _share(apps_with["inlib"], matched_apps),
        "apps_with_inmain_share": _share(apps_with["inmain"], matched_apps),
        "apps_with_obfuscated_share": _share(apps_with["obfuscated"],
                                             matched_apps),
        "apps_exclusively_inmain_share": _share(exclusively_inmain,
                                                matched_apps),
        "libraries_per_app_mean": (statistics.fmean(libs_per_app)
                                   if libs_per_app else 0.0),
        "libraries_per_app_median": (float(statistics.median(libs_per_app))
                                     if libs_per_app else 0.0),
    }


def top_libraries(corpus: Corpus, detector: str, n: int,
                  known_prefixes=None) -> dict:
    """Rank libraries by how many apps embed a matching call for `detector`.

    Only library-located matches count; ties break lexicographically.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if known_prefixes is None:
        known_prefixes = load_known_prefixes(
            defaults.default_known_prefixes_path())
    apps_by_library: dict[str, set[str]] = {}
    for record in corpus.ok_records():
        for m in record.tee_matches():
            if m["detector"] != detector or m["location"] != "inlib":
                continue
            library = normalize_library(parse_package(m["package"]),
                                        known_prefixes)
            apps_by_library.setdefault(library, set()).add(record.sha256)
    ranked = sorted(((lib, len(apps)) for lib, apps in apps_by_library.items()),
                    key=lambda pair: (-pair[1], pair[0]))
    return {"detector": detector,
            "rows": ranked[:n],
            "unique_libraries": len(apps_by_library)}


def category_breakdown(corpus: Corpus) -> list[dict]:
    """Per-category detector shares among that category's analyzed apps.

    Apps without metadata (null category) are excluded. An app carrying
    several detectors contributes to each of their shares, so a category's
    shares may sum past 1.
    """
    ok = [r for r in corpus.ok_records() if r.category is not None]
    by_category: dict[str, list[CorpusRecord]] = {}
    for record in ok:
        by_category.setdefault(record.category, []).append(record)

    rows = []
    for category in sorted(by_category):
        records = by_category[category]
        detectors_per_app = [{m["detector"] for m in r.tee_matches()}
                             for r in records]
        row = {"category": category, "ok_apps": len(records)}
        for d in TEE_DETECTORS:
            apps = sum(1 for s in detectors_per_app if d in s)
            row[d] = {"apps": apps, "share": _share(apps, len(records))}
        rows.append(row)
    return rows


def _default_library_universe() -> tuple[list[str], list[str]]:
    from .matchers import load_pattern_file, load_native_pattern_file
    software = []
    for pattern_set in load_pattern_file(
            defaults.default_bytecode_patterns_path()):
        if pattern_set.kind == "crypto_software":
            software.append(pattern_set.detector_id)
    native = list(dict.fromkeys(
        p.library for p in load_native_pattern_file(
            defaults.default_native_patterns_path())))
    return software, native


def crypto_table(corpus: Corpus, software_libs=None, native_libs=None) -> dict:
    """Distinct-app counts per crypto library, software and native.

    Libraries from the default pattern universe appear even with zero apps;
    anything else observed in the reports is appended.
    """
    if software_libs is None or native_libs is None:
        default_software, default_native = _default_library_universe()
        software_libs = software_libs or default_software
        native_libs = native_libs or default_native
    ok = corpus.ok_records()

    software_counts = {lib: 0 for lib in software_libs}
    native_counts = {lib: 0 for lib in native_libs}
    apps_with_software = 0
    apps_with_native = 0
    for record in ok:
        libs = set(record.crypto_libs)
        if libs:
            apps_with_software += 1
        for lib in libs:
            software_counts[lib] = software_counts.get(lib, 0) + 1
        native = {hit["library"] for hit in record.native_libs}
        if native:
            apps_with_native += 1
        for lib in native:
            native_counts[lib] = native_counts.get(lib, 0) + 1

    return {
        "software": software_counts,
        "native": native_counts,
        "apps_with_software": apps_with_software,
        "apps_with_native": apps_with_native,
        "ok_apps": len(ok),
    }


@dataclass
class CorpusStats:
    totals: dict
    prevalence: dict
    locations: dict
    top_libs: dict
    categories: list
    crypto: dict


def compute_stats(corpus: Corpus, top_n: int = 10,
                  known_prefixes=None) -> CorpusStats:
    records = corpus.records
    totals = {
        "analyzed": len(records),
        "ok": sum(1 for r in records if r.status == STATUS_OK),
        "failed": sum(1 for r in records if r.status != STATUS_OK),
        "unmatched_metadata": corpus.unmatched_metadata,
    }
    return CorpusStats(
        totals=totals,
        prevalence=api_prevalence(corpus),
        locations=location_split(corpus, known_prefixes),
        top_libs={d: top_libraries(corpus, d, top_n, known_prefixes)
                  for d in TEE_DETECTORS},
        categories=category_breakdown(corpus),
        crypto=crypto_table(corpus))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_stats(stats: CorpusStats, out_dir) -> list[Path]:
    """Emit the result tables as CSV plus one machine-readable summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    prevalence_rows = []
    for d in TEE_DETECTORS:
        cell = stats.prevalence["per_api"][d]
        prevalence_rows.append([d, cell["apps"], cell["share"]])
    for metric in ("any_api", "no_api", "all_four",
                   "all_excl_protected_confirmation"):
        cell = stats.prevalence[metric]
        prevalence_rows.append([metric, cell["apps"], cell["share"]])
    path = out_dir / "prevalence.csv"
    _write_csv(path, ["metric", "apps", "share"], prevalence_rows)
    written.append(path)

    loc = stats.locations
    location_rows = [
        ["matched_apps", loc["matched_apps"]],
        ["matches_total", loc["total_matches"]],
        ["matches_inmain", loc["match_counts"]["inmain"]],
        ["matches_inlib", loc["match_counts"]["inlib"]],
        ["matches_obfuscated", loc["match_counts"]["obfuscated"]],
        ["inlib_match_share", loc["inlib_match_share"]],
        ["apps_with_inlib_share", loc["apps_with_inlib_share"]],
        ["apps_with_inmain_share", loc["apps_with_inmain_share"]],
        ["apps_with_obfuscated_share", loc["apps_with_obfuscated_share"]],
        ["apps_exclusively_inmain_share", loc["apps_exclusively_inmain_share"]],
        ["libraries_per_app_mean", loc["libraries_per_app_mean"]],
        ["libraries_per_app_median", loc["libraries_per_app_median"]],
    ]
    path = out_dir / "locations.csv"
    _write_csv(path, ["metric", "value"], location_rows)
    written.append(path)

    for detector, table in stats.top_libs.items():
        path = out_dir / f"top_libs_{detector}.csv"
        _write_csv(path, ["library", "apps"], table["rows"])
        written.append(path)

    wide_rows = []
    long_rows = []
    for row in stats.categories:
        wide_rows.append([row["category"], row["ok_apps"]]
                         + [row[d]["share"] for d in TEE_DETECTORS])
        for d in TEE_DETECTORS:
            long_rows.append([row["category"], d, row[d]["apps"],
                              row[d]["share"]])
    path = out_dir / "categories.csv"
    _write_csv(path, ["category", "ok_apps"]
               + [f"{d}_share" for d in TEE_DETECTORS], wide_rows)
    written.append(path)
    path = out_dir / "categories_long.csv"
    _write_csv(path, ["category", "detector", "apps", "share"], long_rows)
    written.append(path)

    crypto_rows = [["software", lib, count]
                   for lib, count in stats.crypto["software"].items()]
    crypto_rows += [["native", lib, count]
                    for lib, count in stats.crypto["native"].items()]
    crypto_rows.append(["software", "(any)", stats.crypto["apps_with_software"]])
    crypto_rows.append(["native", "(any)", stats.crypto["apps_with_native"]])
    path = out_dir / "crypto.csv"
    _write_csv(path, ["kind", "library", "apps"], crypto_rows)
    written.append(path)

    summary = {
        "totals": stats.totals,
        "prevalence": stats.prevalence,
        "locations": stats.locations,
        "top_libraries": {d: {"rows": [list(r) for r in t["rows"]],
                              "unique_libraries": t["unique_libraries"]}
                          for d, t in stats.top_libs.items()},
        "categories": stats.categories,
        "crypto": stats.crypto,
    }
    path = out_dir / "summary.json"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    written.append(path)
    return written
