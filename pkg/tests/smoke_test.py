#!/usr/bin/env python3
"""
Basic import test - verifies the package and its subpackages can be imported
without pytest dependency.
"""

import importlib
import sys

MODULE_NAME = "efimov_kit"
SUBMODULES = [
    "model.core",
    "quadrature.torus",
    "two_body.branch",
    "three_body.faddeev",
    "efimov.slopes",
    "main",
]


def main():
    try:
        importlib.import_module(MODULE_NAME)
        print(f"✓ Successfully imported {MODULE_NAME}")
        for name in SUBMODULES:
            importlib.import_module(f"{MODULE_NAME}.{name}")
            print(f"✓ Successfully imported {MODULE_NAME}.{name}")

    except Exception as e:
        print(
            f"✗ Failed to import {MODULE_NAME}: {e}", file=sys.stderr
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
