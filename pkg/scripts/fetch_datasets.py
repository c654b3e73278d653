#!/usr/bin/env python3
"""Materialize the benchmark datasets as analysis-ready CSV files.

Run from the repository root on a machine with network access:

    python scripts/fetch_datasets.py

diabetes.csv ships with the repository (raw measurements bundled with
scikit-learn).  The other three are public datasets fetched from their
canonical hosts; each one is written with a header row, '.' decimals, and
only the columns used by the benchmark protocol:

  machine.csv  209 rows, response PRP, 6 numeric features
               (MYCT, MMIN, MMAX, CACH, CHMIN, CHMAX)
  ozone.csv    330 rows, response ozone (daily maximum concentration),
               9 numeric features (vh, wind, humidity, temp, ibh, dpg,
               ibt, vis, doy)
  bones.csv    485 rows, response spnbmd (relative spinal bone mineral
               density change), features age and gender; the idnum
               subject identifier is dropped
"""

from __future__ import annotations

import io
import sys
import urllib.request
from pathlib import Path

import pandas as pd

OUT_DIR = Path(__file__).resolve().parent.parent / "datasets"

MACHINE_URL = (
    "https://archive.ics.uci.edu/ml/machine-learning-databases/"
    "cpu-performance/machine.data"
)
OZONE_URL = "https://hastie.su.domains/ElemStatLearn/datasets/LAozone.data"
BONES_URL = "https://hastie.su.domains/ElemStatLearn/datasets/bone.data"


def download(url: str) -> bytes:
    print(f"fetching {url}")
    with urllib.request.urlopen(url, timeout=60) as response:
        return response.read()


def fetch_machine() -> None:
    raw = download(MACHINE_URL)
    columns = ["vendor", "model", "MYCT", "MMIN", "MMAX", "CACH",
               "CHMIN", "CHMAX", "PRP", "ERP"]
    frame = pd.read_csv(io.BytesIO(raw), header=None, names=columns)
    keep = frame[["MYCT", "MMIN", "MMAX", "CACH", "CHMIN", "CHMAX", "PRP"]]
    assert keep.shape == (209, 7), keep.shape
    keep.to_csv(OUT_DIR / "machine.csv", index=False)
    print(f"wrote machine.csv {keep.shape}")


def fetch_ozone() -> None:
    raw = download(OZONE_URL)
    frame = pd.read_csv(io.BytesIO(raw))
    assert frame.shape == (330, 10), frame.shape
    assert "ozone" in frame.columns
    frame.to_csv(OUT_DIR / "ozone.csv", index=False)
    print(f"wrote ozone.csv {frame.shape}")


def fetch_bones() -> None:
    raw = download(BONES_URL)
    frame = pd.read_csv(io.BytesIO(raw), sep=r"\s+")
    frame = frame.drop(columns=["idnum"])
    assert frame.shape == (485, 3), frame.shape
    assert set(frame.columns) == {"age", "gender", "spnbmd"}
    frame.to_csv(OUT_DIR / "bones.csv", index=False)
    print(f"wrote bones.csv {frame.shape}")


def main() -> int:
    OUT_DIR.mkdir(exist_ok=True)
    failures = 0
    for fetch in (fetch_machine, fetch_ozone, fetch_bones):
        try:
            fetch()
        except Exception as exc:  # keep going; report at the end
            failures += 1
            print(f"{fetch.__name__} failed: {exc}", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
