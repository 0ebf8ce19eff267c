#!/usr/bin/env python3
"""Regenerate the bundled synthetic ECG excerpt CSV (int16 counts)."""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from csodl.data import EXCERPT_FILENAME, make_excerpt_counts


def main():
    counts = make_excerpt_counts()
    target = Path(__file__).resolve().parents[1] / "src" / "csodl" / "data" / EXCERPT_FILENAME
    target.write_text("\n".join(str(int(v)) for v in counts) + "\n")
    print(f"wrote {target} ({counts.size} samples)")


if __name__ == "__main__":
    main()
