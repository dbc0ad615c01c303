from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def shipped_configs() -> list[Path]:
    return sorted((REPO_ROOT / "configs").glob("*.toml"))
