"""Shared fixtures: cached synthetic datasets plus the acceptance summary.

Large generated datasets are cached under /tmp/rdbev-test-cache keyed by the
effective config digest; generation is deterministic, so reuse across test
runs is safe and saves minutes.
"""

from __future__ import annotations

import hashlib
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rdbev import container
from rdbev.datagen import GenConfig, generate_dataset

CACHE_ROOT = Path("/tmp/rdbev-test-cache")

_acceptance_results: list[str] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {name}"
    if detail:
        line += f"  ({detail})"
    _acceptance_results.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in _acceptance_results:
        terminalreporter.write_line(line)


def cached_dataset(cfg: GenConfig, n_frames: int, seed: int) -> Path:
    """Generate (or reuse) a dataset directory for (cfg, n_frames, seed)."""
    from rdbev.datagen import GEN_VERSION

    key_src = ";".join(f"{k}={v}" for k, v in sorted(cfg.to_mapping().items()))
    key_src += f";frames={n_frames};seed={seed};gen={GEN_VERSION}"
    key = hashlib.sha256(key_src.encode()).hexdigest()[:16]
    out = CACHE_ROOT / f"ds_{n_frames}f_{key}"
    marker = out / "manifest.txt"
    if marker.is_file():
        try:
            manifest = container.read_dataset_manifest(marker)
            if len(manifest.frames) == n_frames and all(
                (out / f.relpath).is_file() for f in manifest.frames
            ):
                return out
        except Exception:
            pass
    out.mkdir(parents=True, exist_ok=True)
    generate_dataset(cfg, out, n_frames, seed)
    return out


@pytest.fixture(scope="session")
def small_dataset() -> Path:
    """60-frame default-config dataset shared by container/CLI tests."""
    return cached_dataset(GenConfig(), 60, seed=101)


@pytest.fixture(scope="session")
def standard_suite() -> Path:
    """The standard synthetic suite: 1000 frames at SNR 20 dB."""
    return cached_dataset(GenConfig(), 1000, seed=20)
