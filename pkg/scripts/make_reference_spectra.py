#!/usr/bin/env python3
"""Regenerate the bundled reference spectra CSV.

The three columns are smooth analytic reflectance curves over 400-2500 nm
(224 bands) shaped like generic vegetation, dry soil, and water.  They are
synthetic stand-ins with fully documented provenance: the closed forms below
are the definition.
"""

from pathlib import Path

import numpy as np


def gauss(lam, center, width):
    return np.exp(-(((lam - center) / width) ** 2))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def vegetation(lam):
    r = (
        0.09
        + 0.05 * gauss(lam, 550.0, 40.0)
        + 0.42 * sigmoid((lam - 715.0) / 16.0)
        - 0.14 * gauss(lam, 1450.0, 60.0)
        - 0.16 * gauss(lam, 1940.0, 70.0)
        - 0.06 * gauss(lam, 1200.0, 40.0)
        - 0.18 * sigmoid((lam - 1500.0) / 250.0)
    )
    return np.clip(r, 0.08, 1.0)


def soil(lam):
    r = (
        0.14
        + 0.42 * (1.0 - np.exp(-(lam - 400.0) / 900.0))
        - 0.05 * gauss(lam, 1415.0, 50.0)
        - 0.07 * gauss(lam, 1915.0, 60.0)
        - 0.09 * gauss(lam, 2210.0, 70.0)
    )
    return np.clip(r, 0.08, 1.0)


def bright_mineral(lam):
    r = (
        0.62
        - 0.10 * sigmoid((lam - 1000.0) / 400.0)
        - 0.22 * gauss(lam, 1450.0, 70.0)
        - 0.28 * gauss(lam, 1930.0, 80.0)
        - 0.18 * gauss(lam, 2210.0, 60.0)
        - 0.12 * gauss(lam, 480.0, 90.0)
    )
    return np.clip(r, 0.08, 1.0)


def main():
    lam = np.linspace(400.0, 2500.0, 224)
    lib = np.column_stack([vegetation(lam), soil(lam), bright_mineral(lam)])
    out = Path(__file__).resolve().parents[1] / "src/hsunmix/data/reference_spectra.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"hsmat,{lib.shape[0]},{lib.shape[1]}"]
    for row in lib:
        lines.append(",".join(repr(float(v)) for v in row))
    out.write_text("\n".join(lines) + "\n", encoding="ascii")
    print(f"wrote {out} ({lib.shape[0]} bands x {lib.shape[1]} spectra)")


if __name__ == "__main__":
    main()
