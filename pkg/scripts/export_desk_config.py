#!/usr/bin/env python3
"""Write the built-in desk-scale corpus configuration to a YAML file.

Usage: python scripts/export_desk_config.py [out.yaml]
"""

import sys

from ramen.corpus import desk_corpus, save_corpus_config


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "desk_corpus.yaml"
    save_corpus_config(out, desk_corpus())
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
