"""Turn the MineThatData e-mail challenge CSV into per-arm experiment inputs.

Source (public, ~64k rows):
    http://www.minethatdata.com/Kevin_Hillstrom_MineThatData_E-MailAnalytics_DataMiningChallenge_2008.03.20.csv

The raw file has three randomized groups: a men's-merchandise e-mail, a
women's-merchandise e-mail, and a no-e-mail control. This script writes one
CSV per e-mail arm (arm rows + control rows), with:

    t  — 1 if the row received that arm's e-mail, 0 for control
    y  — dollars spent in the two weeks that followed
    features — recency, history_segment (ordinal), history, mens, womens,
               newbie, plus one-hot zip_code and channel columns

Usage:
    python3 scripts/prepare_hillstrom.py RAW_CSV OUT_DIR

writes OUT_DIR/womens.csv and OUT_DIR/mens.csv.
"""

import argparse
import csv
import os
import sys

ARMS = {
    "womens.csv": "Womens E-Mail",
    "mens.csv": "Mens E-Mail",
}
CONTROL = "No E-Mail"
NUMERIC = ("recency", "history", "mens", "womens", "newbie")


def one_hot_columns(rows, column):
    categories = sorted({row[column] for row in rows})
    names = [f"{column}_{c.lower().replace(' ', '_').replace('-', '_')}" for c in categories]
    return categories, names


def prepare(raw_path, out_dir):
    with open(raw_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SystemExit(f"{raw_path}: no data rows")

    zip_cats, zip_names = one_hot_columns(rows, "zip_code")
    chan_cats, chan_names = one_hot_columns(rows, "channel")
    header = (
        ["recency", "history_segment", "history", "mens", "womens", "newbie"]
        + zip_names
        + chan_names
        + ["t", "y"]
    )

    os.makedirs(out_dir, exist_ok=True)
    for filename, arm in ARMS.items():
        path = os.path.join(out_dir, filename)
        kept = 0
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                if row["segment"] not in (arm, CONTROL):
                    continue
                record = [row["recency"]]
                # "history_segment" looks like "2) $100 - $200"; keep the rank
                record.append(row["history_segment"].split(")")[0])
                record.extend(row[c] for c in ("history", "mens", "womens", "newbie"))
                record.extend(int(row["zip_code"] == c) for c in zip_cats)
                record.extend(int(row["channel"] == c) for c in chan_cats)
                record.append(int(row["segment"] == arm))
                record.append(row["spend"])
                writer.writerow(record)
                kept += 1
        print(f"{path}: {kept} rows ({arm!r} vs control)")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n", 1)[0])
    parser.add_argument("raw_csv", help="downloaded challenge CSV")
    parser.add_argument("out_dir", help="directory for the per-arm CSVs")
    args = parser.parse_args(argv)
    prepare(args.raw_csv, args.out_dir)


if __name__ == "__main__":
    sys.exit(main())
