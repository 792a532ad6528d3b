from __future__ import annotations

import json

from analytika.matchers import MatchRecord
from analytika.report import (
    AppReport,
    deterministic_document,
    read_report_document,
    report_path,
    write_report,
)


def _report():
    return AppReport(
        sha256="ab" * 32,
        package_name="com.x.app",
        matches=[MatchRecord(
            detector_id="drm", target_class="android.media.MediaDrm",
            target_method="openSession", caller_class="com.x.app.P",
            dex_file="classes.dex", code_offset=64, location="inmain",
            attributed_package="com.x.app")],
        native_lib_hits=[("openssl", "lib/x86/libssl.so")],
        crypto_software_libs=["java_security"],
        api_summary={"drm": True},
        timings={"total": 0.5, "archive": 0.1})


def test_document_layout_is_the_stable_contract():
    doc = _report().to_document()
    assert set(doc) == {"meta", "matches", "native_libs", "crypto_libs",
                        "timing"}
    assert set(doc["meta"]) == {
        "package", "expected_package", "sha256", "status", "message",
        "package_name_check", "permissions", "min_sdk", "api_summary"}
    assert set(doc["matches"][0]) == {
        "detector", "target_class", "target_method", "caller_class",
        "dex_file", "code_offset", "location", "package"}
    assert doc["native_libs"] == [{"library": "openssl",
                                   "file": "lib/x86/libssl.so"}]
    assert doc["timing"]["total_s"] == 0.5
    assert doc["timing"]["stages"] == {"archive": 0.1}
    assert doc["meta"]["api_summary"]["drm"] is True
    assert doc["meta"]["api_summary"]["keystore"] is False


def test_write_is_atomic_named_by_sha_and_round_trips(tmp_path):
    report = _report()
    path = write_report(report, tmp_path)
    assert path == report_path(tmp_path, report.sha256)
    assert path.name == f"{'ab' * 32}.json"
    assert not list(tmp_path.glob("*.tmp"))
    assert read_report_document(path) == report.to_document()


def test_deterministic_document_drops_only_timing():
    doc = _report().to_document()
    trimmed = deterministic_document(doc)
    assert "timing" not in trimmed
    assert set(trimmed) == {"meta", "matches", "native_libs", "crypto_libs"}
    again = deterministic_document(_report().to_document())
    assert json.dumps(trimmed, sort_keys=True) == json.dumps(again,
                                                             sort_keys=True)
