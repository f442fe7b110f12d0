#!/usr/bin/env python3
"""Write a MovieLens 100K train/test split in the toolkit's rating format.

Input is the original `u.data` file (tab separated: user item rating timestamp)
or any parquet/CSV table with user, item and rating columns. Ratings are
shuffled with a fixed seed and the first --test-size rows become the test split.
"""
import argparse
import pathlib

import numpy as np
import pandas as pd


def load(path: pathlib.Path) -> pd.DataFrame:
    name = path.name.lower()
    if ".parquet" in name:
        df = pd.read_parquet(path)
    elif name.endswith(".data"):
        df = pd.read_csv(path, sep="\t", header=None, names=["user_id", "movie_id", "rating", "timestamp"])
    else:
        df = pd.read_csv(path, sep=None, engine="python")
    cols = list(df.columns)
    user = next(c for c in cols if "user" in str(c).lower())
    item = next(c for c in cols if "item" in str(c).lower() or "movie" in str(c).lower())
    rating = next(c for c in cols if "rating" in str(c).lower())
    return df[[user, item, rating]].rename(columns={user: "user", item: "item", rating: "rating"})


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("source", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--test-size", type=int, default=7974)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    df = load(args.source)
    if df.duplicated(["user", "item"]).any():
        raise SystemExit("duplicate (user, item) pairs in source")
    order = np.random.RandomState(args.seed).permutation(len(df))
    test = df.iloc[order[: args.test_size]].sort_values(["user", "item"])
    train = df.iloc[order[args.test_size :]].sort_values(["user", "item"])

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for split, frame in (("train", train), ("test", test)):
        with open(args.out_dir / f"{split}.csv", "w", newline="\n") as f:
            for u, i, r in frame.itertuples(index=False):
                f.write(f"{u};{i};{r:g}\n")
    print(f"users={df.user.nunique()} items={df.item.nunique()} train={len(train)} test={len(test)}")


if __name__ == "__main__":
    main()
