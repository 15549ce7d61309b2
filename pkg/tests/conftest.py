import pytest

from app.services import variation_service


@pytest.fixture(autouse=True)
def isolated_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MEANVALUE_OUT_DIR", str(tmp_path / "results"))
    monkeypatch.setenv("MEANVALUE_EXPERIMENTS_FILE", str(tmp_path / "missing.json"))
    monkeypatch.setenv("MEANVALUE_WORKERS", "1")
    yield
    variation_service.total_variation_estimate.cache_clear()
