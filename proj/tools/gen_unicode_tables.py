#!/usr/bin/env python3
"""Regenerates include/cer/detail/unicode_tables.hpp from Python's unicodedata.

Alphanumeric = general category L* or N*. Lowercase map = simple one-to-one
mappings from str.lower() (multi-code-point expansions are skipped).
"""
import sys
import unicodedata
from pathlib import Path


def ranges(pred):
    out = []
    start = None
    for cp in range(0x110000):
        ok = pred(cp)
        if ok and start is None:
            start = cp
        elif not ok and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, 0x10FFFF))
    return out


def is_alnum(cp):
    if 0xD800 <= cp <= 0xDFFF:
        return False
    return unicodedata.category(chr(cp))[0] in ("L", "N")


def lower_pairs():
    pairs = []
    for cp in range(0x110000):
        if 0xD800 <= cp <= 0xDFFF:
            continue
        lo = chr(cp).lower()
        if len(lo) == 1 and ord(lo) != cp:
            pairs.append((cp, ord(lo)))
    return pairs


def main():
    root = Path(__file__).resolve().parent.parent
    dest = root / "include" / "cer" / "detail" / "unicode_tables.hpp"
    alnum = ranges(is_alnum)
    lower = lower_pairs()
    lines = [
        "#pragma once",
        f"// Generated by tools/gen_unicode_tables.py (Unicode {unicodedata.unidata_version}). Do not edit.",
        "",
        "#include <array>",
        "#include <cstdint>",
        "",
        "namespace cer::detail {",
        "",
        "struct CodePointRange {",
        "    char32_t first;",
        "    char32_t last;",
        "};",
        "",
        "struct CaseMapping {",
        "    char32_t from;",
        "    char32_t to;",
        "};",
        "",
        f"inline constexpr std::array<CodePointRange, {len(alnum)}> kAlnumRanges{{{{",
    ]
    for a, b in alnum:
        lines.append(f"    {{0x{a:X}, 0x{b:X}}},")
    lines.append("}};")
    lines.append("")
    lines.append(f"inline constexpr std::array<CaseMapping, {len(lower)}> kLowerMap{{{{")
    for a, b in lower:
        lines.append(f"    {{0x{a:X}, 0x{b:X}}},")
    lines.append("}};")
    lines.append("")
    lines.append("}  // namespace cer::detail")
    dest.write_text("\n".join(lines) + "\n")
    print(f"wrote {dest} ({len(alnum)} ranges, {len(lower)} case pairs)", file=sys.stderr)


if __name__ == "__main__":
    main()
