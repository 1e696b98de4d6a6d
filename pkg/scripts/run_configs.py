"""Run every shipped config (or the ones named) into out/<name>/."""

import argparse
import sys
from pathlib import Path

from srengine import cli

HERE = Path(__file__).resolve().parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", help="config stems, default all")
    ap.add_argument("--out", default="out")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    configs = sorted((HERE / "configs").glob("*.ini"))
    if args.names:
        configs = [c for c in configs if c.stem in args.names]
    failed = []
    for path in configs:
        print(f"== {path.stem}", flush=True)
        code = cli.run(path, out=Path(args.out) / path.stem, threads=args.threads)
        if code:
            failed.append((path.stem, code))
    for name, code in failed:
        print(f"{name}: exit {code}", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
