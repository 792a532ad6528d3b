from __future__ import annotations

import random
from collections import Counter

import pytest

from analytika.dex import (
    INSTRUCTION_WIDTHS,
    INVOKE_OPCODES,
    MethodRef,
    _walk_insns,
    descriptor_to_dotted,
    parse_dex,
)
from analytika.dexbuild import build_fixture_dex
from analytika.errors import InvalidPlanError, MalformedDexError

from conftest import random_plan
from dexlister import list_invokes


def _invocation_multiset(unit):
    return Counter((inv.caller_class, inv.target.defining_class,
                    inv.target.method_name) for inv in unit.invocations)


def _plan_multiset(plan):
    return Counter((caller, cls, method)
                   for caller, targets in plan
                   for cls, method in targets)


def test_single_invocation_round_trip():
    plan = [("com.test.Main", [("android.media.MediaDrm", "<init>")])]
    unit = parse_dex(build_fixture_dex(plan))
    assert _invocation_multiset(unit) == _plan_multiset(plan)
    inv = unit.invocations[0]
    assert inv.caller_class == "com.test.Main"
    assert inv.dex_file == "classes.dex"
    assert 0 < inv.code_offset < unit.header.file_size


def test_empty_plan_parses_to_nothing():
    unit = parse_dex(build_fixture_dex([]))
    assert unit.invocations == ()
    assert unit.methods == ()
    assert unit.class_names == ()


def test_plan_with_class_but_no_calls():
    unit = parse_dex(build_fixture_dex([("com.empty.C", [])]))
    assert unit.invocations == ()
    assert unit.class_names == ("com.empty.C",)


def test_short_input_is_malformed():
    with pytest.raises(MalformedDexError):
        parse_dex(b"dex\n")


def test_unsupported_version_rejected():
    data = bytearray(build_fixture_dex([("com.a.B", [])]))
    data[4:7] = b"034"
    with pytest.raises(MalformedDexError):
        parse_dex(bytes(data))


def test_duplicate_targets_yield_duplicate_invocations():
    plan = [("com.a.B", [("x.y.Z", "go"), ("x.y.Z", "go")])]
    unit = parse_dex(build_fixture_dex(plan))
    assert _invocation_multiset(unit) == _plan_multiset(plan)


def test_round_trip_property_seeded():
    rng = random.Random(1234)
    for _ in range(120):
        plan = random_plan(rng, max_classes=12, max_targets=6)
        unit = parse_dex(build_fixture_dex(plan))
        assert _invocation_multiset(unit) == _plan_multiset(plan)


def test_pool_sizes_agree_with_header():
    plan = random_plan(random.Random(5), max_classes=20, max_targets=8)
    unit = parse_dex(build_fixture_dex(plan))
    assert len(unit.strings) == unit.header.string_ids_size
    assert len(unit.types) == unit.header.type_ids_size
    assert len(unit.methods) == unit.header.method_ids_size
    assert len(unit.class_names) == unit.header.class_defs_size


def test_method_pool_exposes_uninvoked_references():
    # The caller's own method is in the pool but never an invoke target.
    unit = parse_dex(build_fixture_dex([("org.jasypt.Util", [])]))
    assert ("org.jasypt.Util", "run") in {
        (m.defining_class, m.method_name) for m in unit.methods}
    assert unit.invocations == ()


def test_extra_strings_planted_but_inert():
    planted = "Landroid/security/keystore/KeyProperties;"
    unit = parse_dex(build_fixture_dex(
        [("com.a.B", [("x.y.Z", "go")])], extra_strings=[planted]))
    assert planted in unit.strings
    assert "android.security.keystore.KeyProperties" not in unit.types
    assert all(m.defining_class != "android.security.keystore.KeyProperties"
               for m in unit.methods)


def test_invalid_plans_rejected():
    with pytest.raises(InvalidPlanError):
        build_fixture_dex([("com.a.B", []), ("com.a.B", [])])
    with pytest.raises(InvalidPlanError):
        build_fixture_dex([("com..B", [])])
    with pytest.raises(InvalidPlanError):
        build_fixture_dex([("1bad.Name", [])])
    with pytest.raises(InvalidPlanError):
        build_fixture_dex([("com.a.B", [("x.y.Z", "not a method")])])


def test_descriptor_conversion():
    assert descriptor_to_dotted("Lcom/foo/Bar;") == "com.foo.Bar"
    assert descriptor_to_dotted("Lcom/foo/Bar$Baz;") == "com.foo.Bar$Baz"
    assert descriptor_to_dotted("[Ljava/lang/String;") == "java.lang.String[]"
    assert descriptor_to_dotted("I") == "int"
    assert descriptor_to_dotted("V") == "void"


def test_agrees_with_independent_lister(smoke_corpus):
    import io
    import zipfile
    for _package, apk in smoke_corpus:
        zf = zipfile.ZipFile(io.BytesIO(apk))
        for name in zf.namelist():
            if not name.endswith(".dex"):
                continue
            raw = zf.read(name)
            unit = parse_dex(raw, name)
            mine = {(inv.caller_class,
                     inv.target.defining_class,
                     inv.target.method_name) for inv in unit.invocations}
            theirs = {(descriptor_to_dotted(c), descriptor_to_dotted(t), m)
                      for c, t, m in list_invokes(raw)}
            assert mine == theirs


def test_byte_flip_fuzz_never_crashes():
    base = build_fixture_dex(random_plan(random.Random(77), max_classes=8))
    rng = random.Random(4242)
    outcomes = {"ok": 0, "malformed": 0}
    for _ in range(400):
        mutated = bytearray(base)
        for _ in range(rng.randint(1, 3)):
            mutated[rng.randrange(len(mutated))] = rng.randrange(256)
        try:
            parse_dex(bytes(mutated))
            outcomes["ok"] += 1
        except MalformedDexError:
            outcomes["malformed"] += 1
    assert sum(outcomes.values()) == 400


def test_truncation_fuzz_never_crashes():
    base = build_fixture_dex([("com.a.B", [("x.y.Z", "go")])])
    for cut in range(len(base)):
        try:
            parse_dex(base[:cut])
        except MalformedDexError:
            pass


def _units(*values):
    out = bytearray()
    for v in values:
        out += v.to_bytes(2, "little")
    return bytes(out)


def test_walker_skips_payload_pseudo_instructions():
    # invoke-static idx=0 | packed-switch-payload size=2 | return-void
    insns = _units(0x0071, 0x0000, 0x0000)
    insns += _units(0x0100, 0x0002, 0, 0, 0, 0, 0, 0)   # 2*2+4 = 8 units
    insns += _units(0x000E)
    hits = list(_walk_insns(insns, 0, len(insns) // 2, len(insns), 1))
    assert [idx for _, idx in hits] == [0]


def test_walker_rejects_escaping_payload():
    insns = _units(0x0300, 0x0004, 0xFFFF, 0xFFFF)   # fill-array, huge count
    with pytest.raises(MalformedDexError):
        list(_walk_insns(insns, 0, len(insns) // 2, len(insns), 1))


def test_walker_rejects_undefined_opcode():
    insns = _units(0x003E)
    with pytest.raises(MalformedDexError):
        list(_walk_insns(insns, 0, len(insns) // 2, len(insns), 1))


def test_width_table_shape():
    assert len(INSTRUCTION_WIDTHS) == 256
    assert all(op in INVOKE_OPCODES or INSTRUCTION_WIDTHS[op] >= 0
               for op in range(256))
    assert all(INSTRUCTION_WIDTHS[op] == 3 for op in INVOKE_OPCODES)
