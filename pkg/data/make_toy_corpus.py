"""Regenerate toy_10kb.txt, the small byte-level corpus used for overfitting checks.

The text is a deterministic counting rhyme, so a tiny model can drive its
training loss close to zero.
"""
from pathlib import Path

NUMBERS = "one two three four five six seven eight nine ten".split()
TARGET_BYTES = 10240


def toy_lines():
    lines, size, i = [], 0, 0
    while size < TARGET_BYTES:
        line = f"{NUMBERS[i % 10]} little ducks went out one day, then came {NUMBERS[(i + 1) % 10]}."
        lines.append(line)
        size += len(line) + 1
        i += 1
    return lines


if __name__ == "__main__":
    out = Path(__file__).with_name("toy_10kb.txt")
    out.write_text("\n".join(toy_lines()) + "\n", encoding="utf-8")
    print(f"wrote {out} ({out.stat().st_size} bytes)")
