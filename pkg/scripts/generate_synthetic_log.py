#!/usr/bin/env python3
"""Write a synthetic routing log (one signal attribute, six values) to CSV."""

import argparse

from flowcast.eventlog import write_csv
from flowcast.synthetic import signal_log


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cases", type=int, default=1000)
    parser.add_argument("--min-length", type=int, default=6)
    parser.add_argument("--max-length", type=int, default=10)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", default="signal.csv")
    args = parser.parse_args()

    log = signal_log(cases=args.cases, min_length=args.min_length,
                     max_length=args.max_length, seed=args.seed)
    with open(args.out, "w", encoding="utf-8", newline="") as sink:
        write_csv(log, sink)
    print(f"wrote {len(log.cases)} cases / {log.event_count()} events to {args.out}")


if __name__ == "__main__":
    main()
