import pytest

from sbthermo.cli import main
from sbthermo.validation import DEPHASING_CONFIG, closed_system_suite, dephasing_suite


def test_closed_suite_passes_quickly():
    checks = closed_system_suite()
    assert all(c.passed for c in checks), [c.line() for c in checks]
    assert checks[0].seconds < 60


def test_check_line_reports_numbers():
    line = closed_system_suite()[0].line()
    assert line.startswith("[PASS] closed/sigma_z_vs_cos: measured ")
    assert "budget 1.0e-08" in line


def test_paper_literal_convention_fails_dephasing():
    # deliberate fault: the literal coupling convention must be caught by the
    # dephasing oracle itself; a shallow hierarchy separates the two clearly
    shallow = DEPHASING_CONFIG.replace(max_tier=3, tail_terms=2)
    literal = {c.name: c for c in dephasing_suite(shallow.replace(coupling_convention="paper-literal"))}
    standard = {c.name: c for c in dephasing_suite(shallow)}
    assert not literal["coherence_relative"].passed
    assert not literal["populations"].passed
    assert literal["coherence_relative"].measured > 10 * standard["coherence_relative"].measured
    assert standard["populations"].passed


def test_validate_cli_rejects_unknown_suite():
    with pytest.raises(SystemExit):
        main(["validate", "--suite", "bogus"])
