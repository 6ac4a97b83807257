"""Tests for training metrics and CSV export."""
import pytest

from app.utils.metrics import Metric, TrainingMonitor, rows_to_csv


def test_metric_summary_and_moving_average():
    metric = Metric(name="loss")
    for step, value in enumerate([4.0, 2.0, 3.0, 1.0]):
        metric.record(step, value)
    summary = metric.summary()
    assert summary["count"] == 4
    assert summary["min"] == 1.0
    assert summary["last_step"] == 3
    assert metric.moving_average(2).tolist() == [3.0, 2.5, 2.0]
    assert metric.moving_average(10).size == 0


def test_rows_follow_the_log_interval():
    monitor = TrainingMonitor(["total", "cfm"], log_interval=5, record_wall_time=False)
    logged = [monitor.log_step(step, total=1.0, cfm=0.5) for step in range(20)]
    assert sum(logged) == 4
    assert [row["step"] for row in monitor.rows] == [4, 9, 14, 19]
    assert len(monitor.metrics["total"].values) == 20
    lines = monitor.to_csv().splitlines()
    assert lines[0] == "step,total,cfm"
    assert len(lines) == 5


def test_wall_time_column_is_optional():
    monitor = TrainingMonitor(["l1"])
    monitor.log_step(0, l1=0.1)
    assert monitor.to_csv().splitlines()[0] == "step,l1,wall_time"
    assert monitor.rows[0]["wall_time"] >= 0.0


def test_missing_components_raise():
    monitor = TrainingMonitor(["total", "sync"])
    with pytest.raises(ValueError):
        monitor.log_step(0, total=1.0)


def test_bad_log_interval():
    with pytest.raises(ValueError):
        TrainingMonitor(["total"], log_interval=0)


def test_track_records_durations():
    monitor = TrainingMonitor(["total"])
    with monitor.track():
        pass
    with monitor.track():
        pass
    assert monitor.get_metrics()["step_duration"]["count"] == 2
    assert monitor.last("total") is None


def test_write_csv(tmp_path):
    monitor = TrainingMonitor(["total"], record_wall_time=False)
    monitor.log_step(0, total=0.1)
    monitor.write_csv(tmp_path / "out" / "loss.csv")
    assert (tmp_path / "out" / "loss.csv").read_text() == "step,total\n0,0.1\n"


def test_rows_to_csv_uses_exact_floats():
    text = rows_to_csv([{"a": 1 / 3, "b": "x"}, {"a": 2}], ["a", "b"])
    assert text == "a,b\n0.3333333333333333,x\n2,\n"
