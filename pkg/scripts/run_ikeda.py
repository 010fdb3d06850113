#!/usr/bin/env python3
"""Desk-scale Ikeda-map twin experiment; writes an RMSE-vs-N CSV."""

import sys

from polyfilt.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    sys.exit(
        main(
            [
                "run",
                "--scenario", "ikeda",
                "--filters", "engmf,enkf,bcpf,bpf,enkcpf,nofilter",
                "--ensemble-sizes", "100,250",
                "--steps", "550",
                "--discard", "50",
                "--mc-reps", "24",
                "--seed", "0",
                "--out", "ikeda.csv",
            ]
            + args
        )
    )
