#!/usr/bin/env python3
"""Fetch MovieLens data into data/ in the layout relagg expects.

    data/ml-100k/u.data, u.user
    data/ml-1m/ratings.dat, users.dat

GroupLens is tried first. For ml-100k there is a fallback: the recbole wheel
on PyPI ships the same 100k ratings as tab-separated atomic files, which are
converted to the original formats.
"""

import argparse
import io
import pathlib
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

GROUPLENS = "https://files.grouplens.org/datasets/movielens/{}.zip"
WANTED = {
    "ml-100k": ("u.data", "u.user"),
    "ml-1m": ("ratings.dat", "users.dat"),
}


def from_grouplens(name, dest):
    with urllib.request.urlopen(GROUPLENS.format(name), timeout=60) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    for member in WANTED[name]:
        (dest / member).write_bytes(archive.read(f"{name}/{member}"))


def from_recbole(dest):
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-d", tmp, "recbole==1.2.1"],
            check=True,
            stdout=subprocess.DEVNULL,
        )
        wheel = next(pathlib.Path(tmp).glob("recbole-*.whl"))
        archive = zipfile.ZipFile(wheel)
        base = "recbole/dataset_example/ml-100k/ml-100k"
        inter = archive.read(base + ".inter").decode().splitlines()[1:]
        users = archive.read(base + ".user").decode().splitlines()[1:]
    # Atomic files drop nothing but the header; u.user is pipe separated.
    (dest / "u.data").write_text("\n".join(inter) + "\n")
    (dest / "u.user").write_text("\n".join(l.replace("\t", "|") for l in users) + "\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("datasets", nargs="*", default=["ml-100k", "ml-1m"], choices=sorted(WANTED))
    parser.add_argument("--root", default=pathlib.Path(__file__).resolve().parent.parent / "data", type=pathlib.Path)
    args = parser.parse_args()

    status = 0
    for name in args.datasets:
        dest = args.root / name
        dest.mkdir(parents=True, exist_ok=True)
        if all((dest / f).exists() for f in WANTED[name]):
            print(f"{name}: already present")
            continue
        try:
            from_grouplens(name, dest)
            print(f"{name}: fetched from GroupLens")
        except Exception as err:
            if name != "ml-100k":
                print(f"{name}: unavailable ({err})", file=sys.stderr)
                status = 1
                continue
            from_recbole(dest)
            print(f"{name}: extracted from the recbole wheel")
    return status


if __name__ == "__main__":
    sys.exit(main())
