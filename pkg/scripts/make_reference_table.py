"""Regenerate tests/data/special_reference.json with 200-digit mpmath values.

Run from the repository root: python scripts/make_reference_table.py
"""
import itertools
import json
from pathlib import Path

import mpmath

mpmath.mp.dps = 200

XS = ["0", "0.001", "0.05", "0.125", "0.25", "1/3", "0.5", "0.75", "0.9", "0.999"]
SHAPES = ["0.5", "1", "2", "3.5", "11", "51", "300", "2500"]
BETA_SHAPES = ["1", "1.5", "7", "123.25", "1e4", "1e6"]


def mpf(text):
    num, _, den = text.partition("/")
    return mpmath.mpf(num) / (mpmath.mpf(den) if den else 1)


def log_upper(x, a, b):
    # Reflection keeps the integral anchored at 0, avoiding cancellation.
    return mpmath.log(mpmath.betainc(b, a, 0, 1 - x))


def main():
    upper = []
    for xs, as_, bs in itertools.product(XS, SHAPES, SHAPES):
        x, a, b = mpmath.mpf(float(mpf(xs))), mpf(as_), mpf(bs)
        upper.append({"x": float(x), "a": float(a), "b": float(b),
                      "log_upper": mpmath.nstr(log_upper(x, a, b), 30)})
    log_beta = [{"a": float(mpf(a)), "b": float(mpf(b)), "log_beta": mpmath.nstr(mpmath.log(mpmath.beta(mpf(a), mpf(b))), 30)}
                for a, b in itertools.combinations_with_replacement(BETA_SHAPES, 2)]
    out = {"digits": 200, "log_inc_beta_upper": upper, "log_beta": log_beta}
    path = Path(__file__).resolve().parents[1] / "tests" / "data" / "special_reference.json"
    path.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(upper)} + {len(log_beta)} values to {path}")


if __name__ == "__main__":
    main()
