#!/usr/bin/env python
"""Write a synthetic target/source tile set and its manifest.

    python scripts/make_synthetic.py runs/synth --targets 100 --pool 50 --size 256
"""

import argparse

from tileuda.synthetic import make_dataset


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("root")
    p.add_argument("--targets", type=int, default=20)
    p.add_argument("--pool", type=int, default=10)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--factor", type=int, default=1, help="write targets at factor x resolution")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    path = make_dataset(args.root, args.targets, args.pool, args.size, args.seed, args.factor)
    print(path)


if __name__ == "__main__":
    main()
