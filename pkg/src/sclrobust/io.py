"""Report and metrics file emission. No timestamps or host data, so reruns are byte-identical."""

from __future__ import annotations

import csv
import io
import os

SWEEP_HEADER = ("epsilon", "accuracy")


def write_text(path: str | os.PathLike, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for eps, acc in rows:
        writer.writerow([repr(float(eps)), repr(float(acc))])
    return buf.getvalue()


def write_sweep_csv(path: str | os.PathLike, rows) -> None:
    write_text(path, sweep_csv(rows))


def summary_block(values: dict[str, float]) -> str:
    return "".join(f"{k}={float(v)!r}\n" for k, v in values.items())


def read_csv(path: str | os.PathLike) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
