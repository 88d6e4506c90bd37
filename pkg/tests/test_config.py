import pytest

from config.settings import Config


def test_defaults(monkeypatch):
    for name in ("PICARD_TOLERANCE", "PICARD_RELAXATION", "WORKERS", "LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    cfg = Config()
    assert cfg.PICARD_RELAXATION == 0.25
    assert cfg.PICARD_TOLERANCE == 1e-8
    assert cfg.WORKERS == 1
    assert set(cfg.solver_defaults()) == {
        "picard_tolerance", "picard_relaxation", "picard_max_iters", "cfl_safety", "nash_memory_budget_mb",
    }


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("PICARD_RELAXATION", "0.5")
    monkeypatch.setenv("NASH_MEMORY_BUDGET_MB", "512")
    cfg = Config()
    assert cfg.PICARD_RELAXATION == 0.5
    assert cfg.NASH_MEMORY_BUDGET_MB == 512.0


def test_every_problem_is_reported(monkeypatch):
    monkeypatch.setenv("PICARD_RELAXATION", "1.5")
    monkeypatch.setenv("WORKERS", "many")
    monkeypatch.setenv("LOG_LEVEL", "chatty")
    with pytest.raises(ValueError) as excinfo:
        Config()
    message = str(excinfo.value)
    assert "PICARD_RELAXATION" in message
    assert "WORKERS" in message
    assert "LOG_LEVEL" in message
