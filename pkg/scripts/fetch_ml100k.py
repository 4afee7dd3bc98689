"""Materialize the MovieLens-100k canonical files (u.data, u.user, u.item).

GroupLens is not always reachable from build machines, so this pulls the
copy bundled inside the ``pytorch-widedeep`` wheel from PyPI and rewrites it
in the published tab/pipe separated layout.

    python scripts/fetch_ml100k.py data/ml-100k
"""
from __future__ import annotations

import glob
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

WHEEL = "pytorch-widedeep==1.7.0"
PREFIX = "pytorch_widedeep/datasets/data/MovieLens100k_"

GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
]


def _fmt(v) -> str:
    import pandas as pd

    if v is None or (isinstance(v, float) and pd.isna(v)):
        return ""
    return str(v)


def fetch(out_dir: Path) -> Path:
    import pandas as pd

    out_dir.mkdir(parents=True, exist_ok=True)
    if all((out_dir / f).exists() for f in ("u.data", "u.user", "u.item")):
        return out_dir
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, WHEEL],
            check=True,
        )
        wheel = zipfile.ZipFile(glob.glob(f"{tmp}/*.whl")[0])

        def read(kind):
            return pd.read_parquet(io.BytesIO(wheel.read(f"{PREFIX}{kind}.parquet.brotli")))

        data, users, items = read("data"), read("users"), read("items")

    with open(out_dir / "u.data", "w", encoding="latin-1") as fh:
        for r in data.itertuples(index=False):
            fh.write(f"{r.user_id}\t{r.movie_id}\t{r.rating}\t{r.timestamp}\n")
    with open(out_dir / "u.user", "w", encoding="latin-1") as fh:
        for r in users.itertuples(index=False):
            fh.write(f"{r.user_id}|{r.age}|{r.gender}|{r.occupation}|{r.zip_code}\n")
    with open(out_dir / "u.item", "w", encoding="latin-1") as fh:
        for _, r in items.iterrows():
            head = [r["movie_id"], r["movie_title"], r["release_date"],
                    r["video_release_date"], r["IMDb_URL"]]
            flags = [int(r[g]) for g in GENRES]
            fh.write("|".join(_fmt(v) for v in head + flags) + "\n")
    return out_dir


if __name__ == "__main__":
    target = Path(sys.argv[1] if len(sys.argv) > 1 else "data/ml-100k")
    print(fetch(target))
