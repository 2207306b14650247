#!/usr/bin/env python3
"""Produce ``data/ml-100k.tsv`` (user<TAB>item<TAB>timestamp) for the test suite.

Sources, in order of preference:

* ``--udata PATH``: an original MovieLens-100k ``u.data`` file
  (user, item, rating, timestamp; tab separated).
* otherwise the copy of ``ml-100k.inter`` shipped inside the RecBole wheel,
  fetched with ``pip download`` (only PyPI access is needed). The rows are the
  same 100,000 records as ``u.data`` in the same order.

Ratings are dropped: every record is an implicit positive.
"""
import argparse
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

INTER_MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"
DEFAULT_OUT = Path(__file__).resolve().parent.parent / "data" / "ml-100k.tsv"


def _rows_from_udata(path):
    with open(path, encoding="latin-1") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) >= 4:
                yield parts[0], parts[1], parts[3]


def _rows_from_recbole():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "recbole==1.2.1", "-d", tmp],
            check=True,
        )
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            text = zf.read(INTER_MEMBER).decode("utf-8")
    reader = io.StringIO(text)
    next(reader)  # typed header row
    for line in reader:
        user, item, _rating, ts = line.rstrip("\n").split("\t")
        yield user, item, str(int(float(ts)))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--udata", type=Path, help="path to an original u.data")
    parser.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = parser.parse_args(argv)

    rows = list(_rows_from_udata(args.udata) if args.udata else _rows_from_recbole())
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("# MovieLens-100k implicit interactions: user\titem\ttimestamp\n")
        for user, item, ts in rows:
            fh.write(f"{user}\t{item}\t{ts}\n")
    print(f"wrote {len(rows)} interactions to {args.out}")


if __name__ == "__main__":
    main()
