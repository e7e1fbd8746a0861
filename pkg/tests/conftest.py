import os
from pathlib import Path

import pytest
import yaml

from atoss.synthetic import lexicon_backend, make_corpus

ROOT = Path(__file__).resolve().parents[1]

# lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def corpus():
    return make_corpus(120, seed=7, prefix="fx")


@pytest.fixture(scope="session")
def lexicon():
    return lexicon_backend()


def official_data_dir():
    d = os.environ.get("ATOSS_DATA_DIR")
    return Path(d) if d else ROOT / "data"


def small_config(tmp_path, **overrides):
    """A fast synthetic run config written to ``tmp_path/config.yaml``."""
    cfg = {
        "run_dir": "run",
        "seed": 0,
        "task": "ASQP",
        "data": {"name": "synthetic", "synthetic": {"train": {"n": 60, "seed": 1}, "test": {"n": 40, "seed": 2}}},
        "teacher": {"kind": "synthetic", "cache_dir": "cache"},
        "backend": {"kind": "lexicon", "lexicon": "synthetic"},
        "filter": {"k": 2, "n_candidates": 10},
        "splitter": {"dim": 8},
        "sft": {"train_batch": 8, "epochs": 4, "learning_rate": 0.3, "early_stop_patience": 5},
        "dpo": {"beta": 0.1, "batch": 8, "epochs": 1, "learning_rate": 0.01},
        "pref_beams": 4,
        "oracle": {"max_m": 4},
    }
    for key, value in overrides.items():
        if value is None:
            cfg.pop(key, None)
        else:
            cfg[key] = value
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path
