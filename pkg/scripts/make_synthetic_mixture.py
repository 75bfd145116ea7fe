from __future__ import annotations

import argparse

from vinstruct.data.synthetic import write_reference_fixture


def main() -> int:
    parser = argparse.ArgumentParser(
        description="Write synthetic raw datasets + manifest shaped like the 665K mixture."
    )
    parser.add_argument("--out", default="data/synthetic", help="Output directory")
    parser.add_argument("--scale", type=float, default=1.0, help="Fraction of full size")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    fixture = write_reference_fixture(args.out, scale=args.scale, seed=args.seed)

    print(f"Manifest written to: {fixture.manifest_path}")
    for name, n in fixture.expected.items():
        print(f"  {name:<16} {n:>8}")
    print(f"Expected total: {fixture.total}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
