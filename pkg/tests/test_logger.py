import logging
from logging.handlers import RotatingFileHandler

from src.logger import LOG_FILE_NAME, get_logger


def test_logger_writes_console_and_file(monkeypatch, tmp_path):
    monkeypatch.setenv("COVFACTOR_LOG_DIR", str(tmp_path))
    monkeypatch.setenv("COVFACTOR_LOG_LEVEL", "debug")
    logger = get_logger("covfactor.test_file")
    assert logger.level == logging.DEBUG
    assert not logger.propagate

    file_handlers = [h for h in logger.handlers if isinstance(h, RotatingFileHandler)]
    assert len(file_handlers) == 1
    logger.info("hello")
    file_handlers[0].flush()
    assert "hello" in (tmp_path / LOG_FILE_NAME).read_text(encoding="utf-8")


def test_handlers_are_not_duplicated(monkeypatch, tmp_path):
    monkeypatch.setenv("COVFACTOR_LOG_DIR", str(tmp_path))
    first = get_logger("covfactor.test_once")
    count = len(first.handlers)
    assert get_logger("covfactor.test_once") is first
    assert len(first.handlers) == count
