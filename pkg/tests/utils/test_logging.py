"""Tests for logging utilities."""
import json
import logging
import sys

from app.utils.logging import StructuredLogFormatter, install_excepthook, set_level, setup_logger


def test_logger_setup():
    logger = setup_logger("test")
    assert logger.name == "test"
    assert isinstance(logger.handlers[0].formatter, StructuredLogFormatter)
    assert setup_logger("test").handlers == logger.handlers


def test_records_are_json_on_stderr(capsys):
    logger = setup_logger("test_json_output")
    logger.info("Step finished", extra={"step": 3, "loss": 0.5})
    captured = capsys.readouterr()
    assert captured.out == ""
    record = json.loads(captured.err.strip().splitlines()[-1])
    assert record["level"] == "INFO"
    assert record["name"] == "test_json_output"
    assert record["message"] == "Step finished"
    assert record["step"] == 3
    assert "timestamp" in record


def test_set_level_reaches_structured_loggers():
    logger = setup_logger("test_levels")
    plain = logging.getLogger("test_plain_logger")
    plain.setLevel(logging.WARNING)
    set_level("DEBUG")
    try:
        assert logger.level == logging.DEBUG
        assert plain.level == logging.WARNING
    finally:
        set_level("INFO")


def test_excepthook_logs_uncaught_errors(mocker, monkeypatch):
    monkeypatch.setattr(sys, "excepthook", sys.__excepthook__)
    logger = mocker.Mock()
    install_excepthook(logger)
    error = RuntimeError("boom")
    sys.excepthook(RuntimeError, error, None)
    logger.critical.assert_called_once()
    assert logger.critical.call_args.kwargs["exc_info"][1] is error
