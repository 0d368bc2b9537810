#!/usr/bin/env python3
"""Fetch the decomposition and UniHan reference data into ./data.

Sources (all reachable through ordinary package registries):
  * cjkvi-ids `ids.txt` (CHISE-derived IDS database) and UniHan
    `Unihan_Variants.txt`, both vendored in the `cjkradlib` wheel on PyPI.
  * UniHan kCantonese readings, taken from the SQLite dump vendored in
    the `cjk-unihan` npm package and re-emitted in the UniHan text layout.

Nothing here is redistributed by this repository; run this script once
before the data-dependent tests and CLI commands.

    python3 scripts/fetch_data.py [--out data]
"""

import argparse
import io
import json
import re
import sqlite3
import tarfile
import tempfile
import urllib.request
import zipfile
from pathlib import Path

PYPI_WHEEL = "cjkradlib"
NPM_PACKAGE = "cjk-unihan"


def fetch(url: str) -> bytes:
    with urllib.request.urlopen(url, timeout=600) as resp:
        return resp.read()


def pypi_wheel_url(name: str) -> str:
    meta = json.loads(fetch(f"https://pypi.org/pypi/{name}/json"))
    for f in meta["urls"]:
        if f["filename"].endswith(".whl"):
            return f["url"]
    raise SystemExit(f"no wheel published for {name}")


def npm_tarball_url(name: str) -> str:
    meta = json.loads(fetch(f"https://registry.npmjs.org/{name}/latest"))
    return meta["dist"]["tarball"]


def codepoint_of(raw: str) -> int:
    m = re.fullmatch(r"\\x\{([0-9A-Fa-f]+)\}", raw)
    if m:
        return int(m.group(1), 16)
    if len(raw) == 1:
        return ord(raw)
    raise ValueError(raw)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    print(f"fetching {PYPI_WHEEL} wheel")
    wheel = zipfile.ZipFile(io.BytesIO(fetch(pypi_wheel_url(PYPI_WHEEL))))
    (out / "ids.txt").write_bytes(wheel.read("cjkradlib/data/cjkvi_ids/ids.txt"))
    (out / "Unihan_Variants.txt").write_bytes(wheel.read("cjkradlib/data/Unihan_Variants.txt"))

    print(f"fetching {NPM_PACKAGE} tarball")
    tar = tarfile.open(fileobj=io.BytesIO(fetch(npm_tarball_url(NPM_PACKAGE))))
    db_bytes = tar.extractfile("package/data/unihan.db").read()
    with tempfile.NamedTemporaryFile(suffix=".db") as tmp:
        tmp.write(db_bytes)
        tmp.flush()
        con = sqlite3.connect(tmp.name)
        rows = []
        for ch, readings in con.execute(
            "SELECT character, kCantonese FROM unihan WHERE kCantonese != ''"
        ):
            rows.append((codepoint_of(ch), readings.strip()))
        con.close()
    rows.sort()
    with open(out / "Unihan_Readings.txt", "w", encoding="utf-8") as f:
        f.write("# kCantonese readings extracted from the cjk-unihan SQLite dump\n")
        for cp, readings in rows:
            f.write(f"U+{cp:04X}\tkCantonese\t{readings}\n")

    for name in ("ids.txt", "Unihan_Variants.txt", "Unihan_Readings.txt"):
        print(f"  {out / name}: {(out / name).stat().st_size} bytes")


if __name__ == "__main__":
    main()
