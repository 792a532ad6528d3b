"""Test-side binary XML encoder.

Produces compiled-manifest bytes the same way the platform packaging chain
lays them out (file header, UTF-16 string pool, resource map, namespace and
element chunks) without sharing any code with the parser under test, so
encode->parse round-trips act as an independent oracle.
"""

from __future__ import annotations

import struct

ANDROID_NS = "http://schemas.android.com/apk/res/android"

_TYPE_STRING = 0x03
_TYPE_INT_DEC = 0x10
_TYPE_INT_BOOLEAN = 0x12

_NO_INDEX = 0xFFFFFFFF


class Elem:
    """(name, attrs, children); attr keys may be (namespace, name) pairs."""

    def __init__(self, name, attrs=None, children=None):
        self.name = name
        self.attrs = attrs or {}
        self.children = children or []


def _collect_strings(root) -> list[str]:
    seen: dict[str, None] = {}

    def add(s):
        if isinstance(s, str):
            seen.setdefault(s)

    def walk(elem):
        add(elem.name)
        for key, value in elem.attrs.items():
            if isinstance(key, tuple):
                add(key[0])
                add(key[1])
            else:
                add(key)
            add(value)
        for child in elem.children:
            walk(child)

    add("android")
    add(ANDROID_NS)
    walk(root)
    return list(seen)


def _string_pool_chunk(strings: list[str]) -> bytes:
    offsets = []
    blob = bytearray()
    for s in strings:
        offsets.append(len(blob))
        encoded = s.encode("utf-16-le")
        blob += struct.pack("<H", len(s)) + encoded + b"\x00\x00"
    while len(blob) % 4:
        blob += b"\x00"
    header_size = 28
    strings_start = header_size + 4 * len(strings)
    size = strings_start + len(blob)
    out = struct.pack("<HHIIIIII", 0x0001, header_size, size,
                      len(strings), 0, 0, strings_start, 0)
    out += b"".join(struct.pack("<I", off) for off in offsets)
    return out + bytes(blob)


def _attr_record(idx, key, value) -> bytes:
    if isinstance(key, tuple):
        ns_idx = idx[key[0]]
        name_idx = idx[key[1]]
    else:
        ns_idx = _NO_INDEX
        name_idx = idx[key]
    if isinstance(value, bool):
        raw, vtype, data = _NO_INDEX, _TYPE_INT_BOOLEAN, (0xFFFFFFFF if value else 0)
    elif isinstance(value, int):
        raw, vtype, data = _NO_INDEX, _TYPE_INT_DEC, value & 0xFFFFFFFF
    else:
        raw, vtype, data = idx[value], _TYPE_STRING, idx[value]
    return struct.pack("<IIIHBBI", ns_idx, name_idx, raw, 8, 0, vtype, data)


def _element_chunks(elem, idx) -> bytes:
    attrs = b"".join(_attr_record(idx, k, v) for k, v in elem.attrs.items())
    body = struct.pack("<IIHHHHHH", _NO_INDEX, idx[elem.name],
                       0x14, 0x14, len(elem.attrs), 0, 0, 0)
    start = struct.pack("<HHIII", 0x0102, 16, 36 + len(attrs), 1, _NO_INDEX)
    start += body + attrs
    inner = b"".join(_element_chunks(child, idx) for child in elem.children)
    end = struct.pack("<HHIIIII", 0x0103, 16, 24, 1, _NO_INDEX,
                      _NO_INDEX, idx[elem.name])
    return start + inner + end


def build_axml(root: Elem) -> bytes:
    strings = _collect_strings(root)
    idx = {s: i for i, s in enumerate(strings)}

    chunks = bytearray()
    chunks += _string_pool_chunk(strings)
    # resource map with no entries, as emitted for plain manifests
    chunks += struct.pack("<HHI", 0x0180, 8, 8)
    chunks += struct.pack("<HHIIIII", 0x0100, 16, 24, 1, _NO_INDEX,
                          idx["android"], idx[ANDROID_NS])
    chunks += _element_chunks(root, idx)
    chunks += struct.pack("<HHIIIII", 0x0101, 16, 24, 1, _NO_INDEX,
                          idx["android"], idx[ANDROID_NS])

    return struct.pack("<HHI", 0x0003, 8, 8 + len(chunks)) + bytes(chunks)


def manifest_bytes(package: str, permissions=(), min_sdk=None) -> bytes:
    children = [Elem("uses-permission", {(ANDROID_NS, "name"): perm})
                for perm in permissions]
    if min_sdk is not None:
        children.append(Elem("uses-sdk", {(ANDROID_NS, "minSdkVersion"): min_sdk}))
    children.append(Elem("application", {(ANDROID_NS, "label"): "app"}))
    return build_axml(Elem("manifest", {"package": package}, children))
