#!/usr/bin/env python3
"""Materialize MovieLens-100K as u.data / u.item / u.user.

Tries the GroupLens archive first. When that host is unreachable, falls back
to the copy bundled inside the RecBole wheel (fetched with `pip download`)
and rewrites its atomic files into the original MovieLens layout.
"""

import argparse
import io
import pathlib
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
]
WANTED = ("u.data", "u.item", "u.user", "u.genre", "u.occupation")


def from_grouplens(out: pathlib.Path) -> bool:
    try:
        with urllib.request.urlopen(GROUPLENS_URL, timeout=15) as resp:
            blob = resp.read()
    except OSError as err:
        print(f"grouplens unavailable: {err}", file=sys.stderr)
        return False
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        for name in WANTED:
            (out / name).write_bytes(zf.read(f"ml-100k/{name}"))
    return True


def rows(blob: bytes):
    lines = blob.decode("utf-8").splitlines()
    for line in lines[1:]:
        if line:
            yield line.split("\t")


def from_recbole(out: pathlib.Path) -> bool:
    with tempfile.TemporaryDirectory() as tmp:
        cmd = [sys.executable, "-m", "pip", "download", "recbole==1.2.1",
               "--no-deps", "-d", tmp, "-q"]
        if subprocess.run(cmd).returncode != 0:
            return False
        wheel = next(pathlib.Path(tmp).glob("recbole-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            base = "recbole/dataset_example/ml-100k/ml-100k"
            inter = zf.read(base + ".inter")
            item = zf.read(base + ".item")
            user = zf.read(base + ".user")

    with open(out / "u.data", "w") as f:
        for uid, iid, rating, ts in rows(inter):
            f.write(f"{uid}\t{iid}\t{int(float(rating))}\t{int(float(ts))}\n")

    items = []
    for iid, title, year, classes in rows(item):
        flags = [0] * len(GENRES)
        for g in classes.split(" "):
            if g:
                flags[GENRES.index(g)] = 1
        date = f"01-Jan-{year}" if year else ""
        items.append((int(iid), f"{iid}|{title} ({year})|{date}|||" +
                      "|".join(map(str, flags))))
    with open(out / "u.item", "w") as f:
        for _, line in sorted(items):
            f.write(line + "\n")

    users = sorted((int(r[0]), r) for r in rows(user))
    with open(out / "u.user", "w") as f:
        for _, (uid, age, gender, occupation, zipcode) in users:
            f.write(f"{uid}|{age}|{gender}|{occupation}|{zipcode}\n")
    with open(out / "u.genre", "w") as f:
        for i, g in enumerate(GENRES):
            f.write(f"{g}|{i}\n")
    return True


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/ml-100k")
    args = parser.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if (out / "u.data").exists() and (out / "u.item").exists():
        print(f"{out} already populated")
        return 0
    if from_grouplens(out) or from_recbole(out):
        print(f"wrote MovieLens-100K to {out}")
        return 0
    print("could not obtain MovieLens-100K", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
