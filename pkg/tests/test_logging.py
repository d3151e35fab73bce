import logging

import pytest

from soswall.logging import _level_from_env, _logger_setup, cell_logger


@pytest.fixture
def scratch_logger():
    yield "soswall.test"
    logger = logging.getLogger("soswall.test")
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)


def test_level_from_env(monkeypatch):
    monkeypatch.delenv("SOSWALL_LOG_LEVEL", raising=False)
    assert _level_from_env() == logging.INFO
    monkeypatch.setenv("SOSWALL_LOG_LEVEL", "debug")
    assert _level_from_env() == logging.DEBUG
    monkeypatch.setenv("SOSWALL_LOG_LEVEL", "15")
    assert _level_from_env() == 15
    monkeypatch.setenv("SOSWALL_LOG_LEVEL", "chatty")
    assert _level_from_env() == logging.INFO


def test_setup_writes_to_a_file(tmp_path, scratch_logger):
    log_file = tmp_path / "logs" / "run.log"
    logger = _logger_setup(logging.DEBUG, log_file=log_file, logger_name=scratch_logger)
    logger.debug("sweep done")
    for handler in logger.handlers:
        handler.flush()
    assert "DEBUG - sweep done" in log_file.read_text()


def test_setup_does_not_stack_handlers(scratch_logger):
    _logger_setup(logging.INFO, logger_name=scratch_logger)
    logger = _logger_setup(logging.WARNING, logger_name=scratch_logger)
    assert len(logger.handlers) == 1
    assert logger.level == logging.WARNING


def test_cell_logger_prefixes_the_chain():
    adapter = cell_logger(64, 1.25, 3)
    msg, _ = adapter.process("cap hit", {})
    assert msg == "[L=64 beta=1.25 seed=3] cap hit"
