"""Per-app analysis orchestration and parallel corpus runs.

Each app is analyzed independently: verify digest, open the archive, parse
the manifest and every bytecode entry, run the detectors, attribute each
match, and write one JSON report. A cooperative deadline is checked at
stage boundaries and inside the long loops (entry decompression, per-class
bytecode parsing), so a stuck app is abandoned shortly after its deadline
without affecting its siblings. Failed apps keep no partial results.
"""

from __future__ import annotations

import csv
import logging
import os
import tempfile
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from . import defaults
from .attribution import (
    classify_location,
    package_of_class,
    parse_package,
    render_package,
)
from .container import (
    enumerate_dex,
    enumerate_native_libs,
    open_archive,
    read_entry,
    sha256_digest,
)
from .dex import parse_dex
from .errors import (
    AnalysisTimeout,
    AnalytikaError,
    EntryNotFoundError,
    HashMismatchError,
    HttpStatusError,
    NetworkError,
)
from .manifest import extract_manifest_info, parse_binary_xml
from .matchers import (
    KIND_CRYPTO_SOFTWARE,
    KIND_TEE_API,
    TEE_DETECTORS,
    load_native_pattern_file,
    load_pattern_file,
    match_crypto_packages,
    match_native_libs,
    match_tee_apis,
)
from .report import (
    AppReport,
    STATUS_ERROR,
    STATUS_OK,
    STATUS_TIMEOUT,
    read_report_document,
    report_path,
    write_report,
)

log = logging.getLogger(__name__)

MANIFEST_ENTRY = "AndroidManifest.xml"

REMOTE_SOURCE = "remote"


class Deadline:
    """Wall-clock budget checked cooperatively from long-running loops."""

    def __init__(self, seconds: float):
        self.seconds = seconds
        self._expires = time.monotonic() + seconds

    def check(self) -> None:
        if time.monotonic() > self._expires:
            raise AnalysisTimeout(f"analysis exceeded {self.seconds}s deadline")


@dataclass
class AnalysisConfig:
    output_dir: Path = Path("reports")
    timeout_seconds: float = 900
    worker_count: int = 4
    pattern_dir: Path | None = None
    known_prefixes_path: Path | None = None
    proguard_as_main: bool = True
    force: bool = False
    fetch_endpoint: str | None = None
    api_key: str | None = None

    def __post_init__(self):
        if self.timeout_seconds < 1:
            raise ValueError("timeout_seconds must be at least 1")
        if self.worker_count < 1:
            raise ValueError("worker_count must be at least 1")


@dataclass(frozen=True)
class CorpusEntry:
    sha256: str
    expected_package_name: str | None = None
    category: str | None = None
    downloads: int | None = None
    last_update: date | None = None
    source: str = ""            # filesystem path, or "remote"

    def __post_init__(self):
        if self.sha256 and not _is_sha256(self.sha256):
            raise ValueError(f"not a sha256 hex digest: {self.sha256!r}")


def _is_sha256(text: str) -> bool:
    return len(text) == 64 and all(c in "0123456789abcdef" for c in text.lower())


def load_corpus_csv(path) -> list[CorpusEntry]:
    """Read corpus metadata rows.

    Columns: sha256,package_name,category,downloads,last_update,path_or_remote.
    A header row is recognized by its literal first cell. Relative paths are
    resolved against the CSV's own directory. Download counts must already be
    plain integers (bucketed strings resolved upstream).
    """
    path = Path(path)
    entries = []
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.reader(handle):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if row[0].strip().lower() == "sha256":
                continue
            if len(row) != 6:
                raise ValueError(f"{path}: expected 6 columns, got {len(row)}")
            sha, package, category, downloads, last_update, source = \
                (cell.strip() for cell in row)
            source_value = source
            if source and source != REMOTE_SOURCE and not os.path.isabs(source):
                source_value = str(path.parent / source)
            entries.append(CorpusEntry(
                sha256=sha.lower(),
                expected_package_name=package or None,
                category=category or None,
                downloads=int(downloads) if downloads else None,
                last_update=date.fromisoformat(last_update) if last_update else None,
                source=source_value))
    return entries


@dataclass(frozen=True)
class LoadedPatterns:
    tee_sets: tuple
    crypto_sets: tuple
    native_patterns: tuple


def load_patterns(pattern_dir=None) -> LoadedPatterns:
    if pattern_dir is None:
        bytecode = defaults.default_bytecode_patterns_path()
        native = defaults.default_native_patterns_path()
    else:
        pattern_dir = Path(pattern_dir)
        bytecode = pattern_dir / "bytecode_patterns.csv"
        native = pattern_dir / "native_patterns.csv"
    sets = load_pattern_file(bytecode)
    return LoadedPatterns(
        tee_sets=tuple(s for s in sets if s.kind == KIND_TEE_API),
        crypto_sets=tuple(s for s in sets if s.kind == KIND_CRYPTO_SOFTWARE),
        native_patterns=tuple(load_native_pattern_file(native)))


@contextmanager
def _stage(timings: dict, name: str):
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


def compare_package_names(expected: str | None, actual: str) -> str:
    if not expected:
        return "unchecked"
    if expected == actual:
        return "match"
    left, right = expected.split("."), actual.split(".")
    shorter, longer = (left, right) if len(left) <= len(right) else (right, left)
    if shorter and longer[:len(shorter)] == shorter:
        return "prefix"
    return "mismatch"


def analyze_apk(data: bytes, entry: CorpusEntry, config: AnalysisConfig,
                patterns: LoadedPatterns | None = None,
                deadline: Deadline | None = None) -> AppReport:
    """Analyze one app end to end; never raises.

    Any failure (digest mismatch, malformed input, deadline) is captured in
    the report status and all partial analysis results are dropped, so
    failed apps cannot leak into corpus statistics.
    """
    if patterns is None:
        patterns = load_patterns(config.pattern_dir)
    if deadline is None:
        deadline = Deadline(config.timeout_seconds)

    timings: dict[str, float] = {}
    started = time.perf_counter()
    report = AppReport(sha256=entry.sha256 or "",
                       expected_package_name=entry.expected_package_name)
    try:
        with _stage(timings, "digest"):
            digest = sha256_digest(data)
            report.sha256 = entry.sha256 or digest
            if entry.sha256 and digest != entry.sha256.lower():
                raise AnalytikaError(
                    f"hash mismatch: expected {entry.sha256}, computed {digest}")
        deadline.check()

        with _stage(timings, "archive"):
            index = open_archive(data)
        deadline.check()

        with _stage(timings, "manifest"):
            try:
                manifest_bytes = read_entry(index, MANIFEST_ENTRY,
                                            cancel_check=deadline.check)
            except EntryNotFoundError:
                raise AnalytikaError("archive has no manifest entry") from None
            info = extract_manifest_info(parse_binary_xml(manifest_bytes))
        deadline.check()

        tee_records = []
        crypto_records = []
        with _stage(timings, "dex"):
            for dex_name in enumerate_dex(index):
                deadline.check()
                raw = read_entry(index, dex_name, cancel_check=deadline.check)
                unit = parse_dex(raw, dex_name, cancel_check=deadline.check)
                deadline.check()
                tee_records.extend(
                    match_tee_apis(unit.invocations, patterns.tee_sets))
                crypto_records.extend(
                    match_crypto_packages(unit, patterns.crypto_sets))

        with _stage(timings, "attribution"):
            app_pkg = parse_package(info.package_name)
            for record in tee_records + crypto_records:
                pkg = (package_of_class(record.caller_class)
                       if record.caller_class else ())
                record.attributed_package = render_package(pkg)
                record.location = classify_location(
                    app_pkg, pkg, proguard_as_main=config.proguard_as_main)
        deadline.check()

        with _stage(timings, "native"):
            native_hits = match_native_libs(enumerate_native_libs(index),
                                            patterns.native_patterns)

        matches = sorted(tee_records + crypto_records,
                         key=lambda r: (r.dex_file, r.code_offset, r.detector_id))
        report.package_name = info.package_name
        report.permissions = info.permissions
        report.min_sdk = info.min_sdk
        report.package_name_check = compare_package_names(
            entry.expected_package_name, info.package_name)
        report.matches = matches
        report.native_lib_hits = native_hits
        report.crypto_software_libs = sorted(
            {r.detector_id for r in crypto_records})
        report.api_summary = {
            d: any(m.detector_id == d for m in tee_records)
            for d in TEE_DETECTORS}
        report.status = STATUS_OK
    except AnalysisTimeout as exc:
        _reset_to_failure(report, STATUS_TIMEOUT, str(exc))
    except Exception as exc:  # any stage failure excludes the app
        _reset_to_failure(report, STATUS_ERROR, str(exc))

    timings["total"] = time.perf_counter() - started
    report.timings = timings
    return report


def _reset_to_failure(report: AppReport, status: str, message: str) -> None:
    # Drop everything except identity so failure reports stay deterministic
    # regardless of which stage the failure surfaced in.
    report.package_name = ""
    report.permissions = ()
    report.min_sdk = None
    report.package_name_check = "unchecked"
    report.matches = []
    report.native_lib_hits = []
    report.crypto_software_libs = []
    report.api_summary = {}
    report.status = status
    report.message = message


@dataclass
class RunSummary:
    analyzed: int = 0
    ok: int = 0
    timeout: int = 0
    error: int = 0
    skipped: int = 0

    def as_dict(self) -> dict:
        return {"analyzed": self.analyzed, "ok": self.ok,
                "timeout": self.timeout, "error": self.error,
                "skipped": self.skipped}


def _probe_writable(out_dir: Path) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        fd, name = tempfile.mkstemp(dir=out_dir, suffix=".probe")
        os.close(fd)
        os.unlink(name)
    except OSError as exc:
        raise OSError(f"output directory not writable: {out_dir}") from exc


def _load_entry_bytes(entry: CorpusEntry, config: AnalysisConfig) -> bytes:
    if entry.source == REMOTE_SOURCE:
        if not config.fetch_endpoint or not config.api_key:
            raise AnalytikaError("remote entry but no fetch endpoint configured")
        return fetch_by_hash(entry.sha256, config.fetch_endpoint, config.api_key)
    if not entry.source:
        raise AnalytikaError("corpus entry has no source path")
    return Path(entry.source).read_bytes()


def run_corpus(entries, config: AnalysisConfig) -> RunSummary:
    """Analyze a corpus with a worker pool; one report file per app.

    Apps whose report already exists with status ok are skipped unless
    config.force is set, which makes interrupted runs cheap to resume.
    Every worker holds only immutable shared state (patterns, config); the
    run log is the single append-only shared output besides the reports.
    """
    out_dir = Path(config.output_dir)
    _probe_writable(out_dir)
    patterns = load_patterns(config.pattern_dir)

    summary = RunSummary()
    todo = []
    for entry in entries:
        existing = report_path(out_dir, entry.sha256)
        if not config.force and existing.exists():
            try:
                doc = read_report_document(existing)
                done = doc.get("meta", {}).get("status") == STATUS_OK
            except (OSError, ValueError):
                done = False
            if done:
                summary.skipped += 1
                continue
        todo.append(entry)

    log_lock = threading.Lock()
    log_path = out_dir / "run.log"

    def _work(entry: CorpusEntry) -> str:
        started = time.perf_counter()
        try:
            data = _load_entry_bytes(entry, config)
        except Exception as exc:
            report = AppReport(sha256=entry.sha256,
                               expected_package_name=entry.expected_package_name,
                               status=STATUS_ERROR,
                               message=f"could not load app bytes: {exc}")
            report.timings = {"total": time.perf_counter() - started}
        else:
            report = analyze_apk(data, entry, config, patterns=patterns)
        write_report(report, out_dir)
        line = (f"{report.sha256} {report.status} "
                f"{report.timings.get('total', 0.0):.3f}s {report.message}\n")
        with log_lock:
            with open(log_path, "a", encoding="utf-8") as handle:
                handle.write(line)
        return report.status

    if todo:
        with ThreadPoolExecutor(max_workers=config.worker_count) as pool:
            for status in pool.map(_work, todo):
                summary.analyzed += 1
                if status == STATUS_OK:
                    summary.ok += 1
                elif status == STATUS_TIMEOUT:
                    summary.timeout += 1
                else:
                    summary.error += 1
    log.info("corpus run finished: %s", summary.as_dict())
    return summary


def fetch_by_hash(sha256: str, endpoint: str, api_key: str,
                  timeout: float = 60.0) -> bytes:
    """Download one APK by digest and verify the bytes before returning."""
    query = urllib.parse.urlencode({"apikey": api_key, "sha256": sha256})
    url = f"{endpoint}?{query}"
    try:
        with urllib.request.urlopen(url, timeout=timeout) as response:
            data = response.read()
    except urllib.error.HTTPError as exc:
        raise HttpStatusError(exc.code) from exc
    except urllib.error.URLError as exc:
        raise NetworkError(str(exc)) from exc
    digest = sha256_digest(data)
    if digest != sha256.lower():
        raise HashMismatchError(
            f"downloaded bytes digest to {digest}, wanted {sha256}")
    return data
