import pytest

import report_generator


def _fragment(verdict, first=None):
    return {
        "verdict": verdict, "satisfied": True, "rho_executed": 0.18, "delta": 0.04, "rho_star": 0.2,
        "delta_within_rho": True, "containment": first is None, "containment_margin": -0.3,
        "bounds": [0.5, 0.5, 0.1], "max_abs_estimate": [0.2, 0.1, 0.01], "saturation_incidents": 0,
        "qp_failures": 0, "fuel": 12.5, "feedback_equivalence": True, "first_violation": first,
    }


@pytest.fixture
def report():
    return {
        "scenario": "planar_inspection",
        "verdict": "not transferable",
        "spec": "F[20,25] A",
        "dims": ["x", "y", "yaw"],
        "alpha_star": 1.3,
        "rho_star": {"space": 0.2, "underwater": None},
        "transfer": {"dt_space": 2.5, "dt_star": 1.8, "duration_space": 75.0, "duration_underwater": 54.0,
                     "speedup": 1.389},
        "seed": 7,
        "injection": {"profile": "constant"},
        "platforms": {
            "space": _fragment("validated"),
            "underwater": _fragment("not transferable", {"tick": 12, "time": 1.2, "axis": "Fx", "excess": 0.05}),
        },
    }


def test_markdown_lists_both_platforms(report):
    text = report_generator.generate_report_markdown(report)
    assert text.startswith("# Mission report: planar_inspection")
    assert "## Space platform" in text and "## Underwater platform" in text
    assert "❌ not transferable" in text
    assert "| rho* (space / underwater) | 0.2 / n/a |" in text
    assert "First containment violation: tick 12 (t = 1.2 s), axis Fx" in text


def test_html_page_carries_the_verdict_badge(report):
    page = report_generator.generate_report_html(report)
    assert "bg-red-500" in page
    assert "<table>" in page


def test_write_report(report, tmp_path):
    paths = report_generator.write_report(report, str(tmp_path))
    assert [p.rsplit("/", 1)[-1] for p in paths] == ["report.md", "report.html"]
    assert (tmp_path / "report.md").read_text(encoding="utf-8").startswith("# Mission report")
