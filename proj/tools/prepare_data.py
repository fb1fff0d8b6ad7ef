#!/usr/bin/env python3
"""Builds the bundled data files under data/.

Inputs are the raw npm tarball contents:
  kjv@1.0.0            json/verses-1769.json   (public domain KJV verses)
  gpt-3-encoder@1.1.4  encoder.json, vocab.bpe (GPT-2 byte-level BPE, MIT)

Usage: prepare_data.py KJV_DIR GPT2_DIR OUT_DIR
"""
import json
import re
import sys
from pathlib import Path


def corpus(kjv_dir: Path, out: Path) -> None:
    verses = json.loads((kjv_dir / "json" / "verses-1769.json").read_text())
    lines = []
    for text in verses.values():
        text = re.sub(r"\s+", " ", text.replace("[", "").replace("]", "").replace("#", "")).strip()
        if text:
            lines.append(text)
    train = [l for i, l in enumerate(lines) if i % 4 == 0]
    heldout = [l for i, l in enumerate(lines) if i % 16 == 1]
    (out / "corpus").mkdir(parents=True, exist_ok=True)
    (out / "corpus" / "kjv_train.txt").write_text("\n".join(train) + "\n")
    (out / "corpus" / "kjv_heldout.txt").write_text("\n".join(heldout) + "\n")


def gpt2(gpt2_dir: Path, out: Path) -> None:
    encoder = json.loads((gpt2_dir / "encoder.json").read_text())
    merges = []
    for line in (gpt2_dir / "vocab.bpe").read_text(encoding="utf-8").split("\n")[1:]:
        if line.strip():
            merges.append(line)
    tok = {
        "version": "1.0",
        "added_tokens": [],
        "normalizer": None,
        "pre_tokenizer": {"type": "ByteLevel", "add_prefix_space": False, "trim_offsets": True},
        "decoder": {"type": "ByteLevel", "add_prefix_space": True, "trim_offsets": True},
        "model": {"type": "BPE", "dropout": None, "unk_token": None, "vocab": encoder, "merges": merges},
    }
    (out / "gpt2").mkdir(parents=True, exist_ok=True)
    (out / "gpt2" / "tokenizer.json").write_text(json.dumps(tok, ensure_ascii=False))


if __name__ == "__main__":
    kjv, g, out = map(Path, sys.argv[1:4])
    corpus(kjv, out)
    gpt2(g, out)
