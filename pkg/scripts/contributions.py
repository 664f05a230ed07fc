"""Print the MLP first-layer weight contributions from a report.json, largest first."""
import argparse
import json


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("report", help="report.json written by `scamgraph evaluate`")
    args = p.parse_args()
    with open(args.report) as fh:
        doc = json.load(fh)
    mlp = next((m for m in doc["models"] if m["model"] == "mlp"), None)
    if mlp is None:
        raise SystemExit("report has no MLP entry")
    contrib = mlp["weight_contributions"]
    total = sum(contrib.values()) or 1.0
    for pos, (name, v) in enumerate(sorted(contrib.items(), key=lambda kv: -kv[1])):
        idx = doc["feature_names"].index(name)
        print(f"{pos + 1:>2}. [{idx:>2}] {name:<20} {v:8.3f}  {100 * v / total:5.1f}%")


if __name__ == "__main__":
    main()
