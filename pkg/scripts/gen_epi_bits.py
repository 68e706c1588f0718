"""Regenerate src/ecr/data/epi_bits.bin (fractional binary digits of e**pi)."""
import argparse
from pathlib import Path

import mpmath

DEFAULT_BITS = 1 << 20


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--bits", type=int, default=DEFAULT_BITS)
    parser.add_argument(
        "--out",
        type=Path,
        default=Path(__file__).resolve().parents[1] / "src" / "ecr" / "data" / "epi_bits.bin",
    )
    args = parser.parse_args()
    if args.bits % 8:
        parser.error("--bits must be a multiple of 8")

    mpmath.mp.prec = args.bits + 256
    value = mpmath.exp(mpmath.pi)
    frac = value - mpmath.floor(value)
    digits = int(mpmath.floor(frac * mpmath.mpf(2) ** args.bits))
    args.out.write_bytes(digits.to_bytes(args.bits // 8, "big"))
    print(f"wrote {args.bits} bits to {args.out}")


if __name__ == "__main__":
    main()
