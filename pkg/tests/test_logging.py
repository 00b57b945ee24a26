import json

import numpy as np

from src.utils import logging as log


def test_events_are_json_lines_on_stderr(capsys):
    log.setup_logging(log_level="DEBUG")

    log.info_event("fold_scored", {"fold": np.int64(3), "sigma": np.array([2.0, 1.0])})
    log.info("plain message")

    captured = capsys.readouterr()
    assert captured.out == ""
    lines = captured.err.strip().splitlines()
    event = json.loads(lines[0])
    assert event["event_type"] == "fold_scored"
    assert event["data"] == {"fold": 3, "sigma": [2.0, 1.0]}
    assert lines[1].endswith("INFO - plain message")


def test_level_and_switch(capsys, tmp_path):
    log_file = tmp_path / "logs" / "sc.log"
    log.setup_logging(log_file=log_file, console=False, log_level="warning", structured_enabled=False)

    log.warning_event("cache_invalid", {"path": "x"})
    log.info("hidden")
    log.setup_logging(log_file=log_file, console=False, log_level="nonsense")
    log.debug_event("svd_computed", {"k": 5})
    log.error_event("command_failed", {"error": "DataError"})

    assert capsys.readouterr().err == ""
    lines = log_file.read_text().strip().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["event_type"] == "command_failed"
