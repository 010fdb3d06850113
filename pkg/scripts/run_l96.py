#!/usr/bin/env python3
"""Desk-scale Lorenz '96 twin experiment; writes an RMSE-vs-N CSV."""

import sys

from polyfilt.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    sys.exit(
        main(
            [
                "run",
                "--scenario", "l96",
                "--filters", "engmf,enkf,enkcpf",
                "--ensemble-sizes", "250",
                "--steps", "1100",
                "--discard", "100",
                "--mc-reps", "5",
                "--seed", "0",
                "--out", "l96.csv",
            ]
            + args
        )
    )
