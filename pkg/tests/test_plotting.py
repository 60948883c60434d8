import pytest

from innodpc import DomainError
from innodpc.plotting import emit_plot

TABLE = [
    {"sweep": "2", "method": "A", "mean_j": "1.5", "se_j": "0.1"},
    {"sweep": "4", "method": "A", "mean_j": "1.2", "se_j": "0.1"},
    {"sweep": "2", "method": "B", "mean_j": "2.0", "se_j": "0.2"},
    {"sweep": "4", "method": "B", "mean_j": "1.9", "se_j": "0.2"},
]


def test_empty_table_rejected():
    with pytest.raises(DomainError):
        emit_plot([], {"y": "mean_j"})


def test_missing_values_rejected():
    with pytest.raises(DomainError):
        emit_plot([{"sweep": "1", "method": "A", "mean_j": ""}],
                  {"y": "mean_j"})


def test_series_and_structure(tmp_path):
    svg = emit_plot(TABLE, {"y": "mean_j", "band": "se_j", "logy": True,
                            "title": "cost"}, tmp_path / "p.svg")
    assert svg.startswith("<?xml")
    assert svg.count("</svg>") == 1
    assert (tmp_path / "p.svg").read_text() == svg


def test_two_point_single_series_snapshot():
    """Deterministic output: same table, same bytes."""
    table = TABLE[:2]
    spec = {"y": "mean_j"}
    assert emit_plot(table, spec) == emit_plot(table, spec)


def test_filter_rows():
    table = [dict(r, loop_mode="open") for r in TABLE] + \
        [dict(r, loop_mode="closed", mean_j="9.9") for r in TABLE]
    svg_open = emit_plot(table, {"y": "mean_j",
                                 "filter": {"loop_mode": "open"}})
    svg_all = emit_plot(table, {"y": "mean_j"})
    assert svg_open != svg_all
