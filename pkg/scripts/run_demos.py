#!/usr/bin/env python3
"""Emit the JSON dumps for all five static examples."""

import sys

from polyfilt.harness import run_static_demo

if __name__ == "__main__":
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    for which in ("cpf", "ecpf", "kcpf", "ekcpf", "banana"):
        out = f"demo_{which}.json"
        run_static_demo(which, out, seed)
        print(f"wrote {out}")
