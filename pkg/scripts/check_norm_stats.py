#!/usr/bin/env python3
"""Compare the frozen normalization tables against empirical moments of
freshly generated samples.

Usage: python scripts/check_norm_stats.py [n_samples]
"""

import sys

import numpy as np

from ramen.corpus import desk_corpus, generate_sample, standardize


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 300
    for ds in desk_corpus():
        print(f"== {ds.name} ({n} samples)")
        acc = {m.name: [] for m in ds.modalities}
        for seed in range(n):
            sample = generate_sample(ds, seed)
            for m in ds.modalities:
                acc[m.name].append(standardize(sample.rasters[m.name], m))
        for m in ds.modalities:
            flat = np.concatenate([z.reshape(-1) for z in acc[m.name]])
            print(f"  {m.name:10s} standardized mean {flat.mean():+.4f} std {flat.std():.4f}")


if __name__ == "__main__":
    main()
