"""Regenerate the committed portfolio golden outputs.

Run from the repository root after any change that is meant to alter the
numbers::

    python3 tests/fixtures/make_golden.py
"""
import os

from nsvt.portfolio import load_config, run_pipeline

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    out = os.path.join(HERE, "golden")
    cfg = load_config(os.path.join(HERE, "portfolio", "config.json"), output_dir=out)
    run_pipeline(cfg)
    print(f"wrote golden outputs to {out}")


if __name__ == "__main__":
    main()
