#!/usr/bin/env python3
"""Regenerates src/tok/unicode_tables.inc from Python's unicodedata."""
import sys
import unicodedata

# Must match zett::tok::CharClass.
OTHER, LETTER, MARK, NUMBER, SPACE = 0, 1, 2, 3, 4


def classify(cp: int) -> int:
    ch = chr(cp)
    if ch.isspace():
        return SPACE
    cat = unicodedata.category(ch)
    if cat[0] == "L":
        return LETTER
    if cat[0] == "M":
        return MARK
    if cat[0] == "N":
        return NUMBER
    return OTHER


def main(out_path: str) -> None:
    ranges = []
    start, cls = 0, classify(0)
    for cp in range(1, 0x110000):
        c = classify(cp)
        if c != cls:
            ranges.append((start, cp - 1, cls))
            start, cls = cp, c
    ranges.append((start, 0x10FFFF, cls))
    ranges = [r for r in ranges if r[2] != OTHER]
    with open(out_path, "w") as f:
        f.write(f"// Generated by tools/gen_unicode_tables.py (unicodedata {unicodedata.unidata_version}).\n")
        f.write("// Ranges not listed are CharClass::Other.\n")
        f.write("static constexpr CharRange kCharRanges[] = {\n")
        for lo, hi, c in ranges:
            f.write(f"    {{0x{lo:X}, 0x{hi:X}, {c}}},\n")
        f.write("};\n")


if __name__ == "__main__":
    main(sys.argv[1])
