"""Fixtures: small rdbev datasets produced through the primary package's CLI
(the only sanctioned interface), cached under /tmp keyed by the generator
version echoed in the manifest."""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import pytest

CACHE = Path("/tmp/rdbev-trainer-test-cache")


def generate_dataset(out: Path, frames: int, seed: int, *extra: str) -> Path:
    if (out / "manifest.txt").is_file():
        return out
    out.parent.mkdir(parents=True, exist_ok=True)
    cmd = [
        sys.executable, "-m", "rdbev", "generate",
        "--out", str(out), "--frames", str(frames), "--seed", str(seed), *extra,
    ]
    subprocess.run(cmd, check=True, capture_output=True, text=True)
    return out


def gen_version() -> str:
    from rdbev.datagen import GEN_VERSION  # test-only import for cache keying

    return str(GEN_VERSION)


@pytest.fixture(scope="session")
def tiny_dataset() -> Path:
    """40 frames, default config."""
    return generate_dataset(CACHE / f"g{gen_version()}" / "tiny40", 40, seed=501)


@pytest.fixture(scope="session")
def overfit_dataset() -> Path:
    """22 frames so the train split is ~14 frames for memorization checks."""
    return generate_dataset(CACHE / f"g{gen_version()}" / "overfit22", 22, seed=502)
