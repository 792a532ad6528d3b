"""The small fixed corpus behind the golden-file table tests."""

from __future__ import annotations

from synth import make_match, report_doc, sha_for, write_corpus_csv, write_report


def build(report_dir, csv_path):
    write_report(report_dir, report_doc(
        sha_for(0), package="com.golden.zero",
        matches=[
            make_match("keystore", "inlib", "com.appsflyer.core", offset=16),
            make_match("drm", "inlib",
                       "com.google.android.exoplayer2.drm.session", offset=32),
        ],
        crypto=("java_security",), native=("openssl",)))
    write_report(report_dir, report_doc(
        sha_for(1), package="com.golden.one",
        matches=[make_match("keystore", "inmain", "com.golden.one", offset=8)]))
    write_report(report_dir, report_doc(
        sha_for(2), package="com.golden.two", crypto=("google_tink",)))
    write_corpus_csv(csv_path, [
        (sha_for(0), "com.golden.zero", "Finance", 20_000, "2021-01-01"),
        (sha_for(1), "com.golden.one", "Finance", 15_000, "2022-03-05"),
        (sha_for(2), "com.golden.two", "Tools", 100_000, "2023-01-01"),
    ])
