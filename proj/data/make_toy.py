"""Writes the toy hierarchy (T; A, B, C; 10 base series) with 120 months."""

import csv
import math
import pathlib

import numpy as np

HERE = pathlib.Path(__file__).parent
GROUPS = {"A": 4, "B": 3, "C": 3}
N_T = 120


def main() -> None:
    rng = np.random.default_rng(20240101)
    base_ids = [f"{g}{k}" for g, n in GROUPS.items() for k in range(1, n + 1)]
    t = np.arange(N_T)
    region = {g: np.cumsum(rng.normal(0.0, 0.6, N_T)) for g in GROUPS}
    base = {}
    for bid in base_ids:
        g = bid[0]
        level = rng.uniform(20.0, 40.0)
        amp = rng.uniform(2.0, 6.0)
        phase = rng.uniform(0.0, 2 * math.pi)
        season = amp * np.sin(2 * math.pi * t / 12 + phase)
        noise = rng.normal(0.0, 1.0, N_T)
        base[bid] = level + 0.03 * t + season + region[g] + noise
    agg = {g: sum(base[b] for b in base_ids if b[0] == g) for g in GROUPS}
    total = sum(agg.values())

    with open(HERE / "toy_hierarchy.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["parent", "child", "level"])
        w.writerow(["", "T", "total"])
        for g in GROUPS:
            w.writerow(["T", g, "region"])
        for b in base_ids:
            w.writerow([b[0], b, "site"])

    ids = ["T", *GROUPS, *base_ids]
    cols = [total, *agg.values(), *(base[b] for b in base_ids)]
    with open(HERE / "toy_data.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["time", *ids])
        for i in range(N_T):
            year, month = divmod(i, 12)
            w.writerow([f"{2010 + year}-{month + 1:02d}-01", *(f"{c[i]:.6f}" for c in cols)])

    # Exogenous forecasts issued at the last month: seasonal naive with a
    # noisy nudge, variance from the seasonal differences.
    with open(HERE / "toy_exo.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["series_id", "origin_time", "horizon", "mean", "variance"])
        last = f"{2010 + (N_T - 1) // 12}-{(N_T - 1) % 12 + 1:02d}-01"
        for sid, c in zip(ids, cols):
            d = c[12:] - c[:-12]
            var = float(np.mean(d[-36:] ** 2))
            for h in range(1, 13):
                mean = c[N_T - 1 + h - 12] + rng.normal(0.0, 0.2 * math.sqrt(var))
                w.writerow([sid, last, h, f"{mean:.6f}", f"{var:.6f}"])


if __name__ == "__main__":
    main()
