from datetime import datetime, timezone

import numpy as np

from src.core.estimand import ImpactEstimate
from src.core.graph import CentralityVector, build_influence_graph
from src.core.report import REPORT_COLUMNS, AccountStats, ReportRow, build_report


def _row(**overrides) -> ReportRow:
    fields = dict(
        screen_name="wikileaks", tweets=3, total_retweets=40, most_retweeted=25, followers=1000,
        first_time=datetime(2017, 5, 5, 18, 49, tzinfo=timezone.utc),
        pagerank=0.00123, impact=5.6, impact_lo=4.0, impact_hi=7.0,
    )
    fields.update(overrides)
    return ReportRow(**fields)


def test_report_cells_are_formatted():
    cells = _row().cells()
    assert len(cells) == len(REPORT_COLUMNS)
    assert cells == ["wikileaks", "3", "40", "25", "1000", "2017-05-05T18:49:00Z", "1.23", "5.60"]


def test_missing_followers_and_time_are_blank():
    cells = _row(followers=None, first_time=None).cells()
    assert cells[4] == "" and cells[5] == ""


def test_report_keeps_the_impact_ranking():
    g = build_influence_graph([("a", "b", 1.0)], vertices=["a", "b", "c"])
    centrality = CentralityVector(scores=np.array([0.2, 0.5, 0.3]), damping=0.85)
    impacts = [
        ImpactEstimate(vertex_id="b", zeta_mean=2.0, zeta_lo=1.0, zeta_hi=3.0, n_draws=10),
        ImpactEstimate(vertex_id="c", zeta_mean=1.0, zeta_lo=0.5, zeta_hi=1.5, n_draws=10),
    ]
    stats = [
        AccountStats(vertex_id="b", screen_name="bob", tweets=2, total_retweets=0, most_retweeted=0),
    ]
    rows = build_report(impacts, stats, g, centrality)
    assert [r.screen_name for r in rows] == ["bob", "c"]
    assert rows[0].pagerank == 0.5
    assert rows[1].tweets == 0
    assert rows[1].cells()[6:] == ["300.00", "1.00"]
