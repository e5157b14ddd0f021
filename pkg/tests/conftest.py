from pathlib import Path

import pytest
from hypothesis import settings

from moets.synthetic import RegimeSpec, regime_switching, write_csv

settings.register_profile("moets", deadline=None)
settings.load_profile("moets")

_criteria: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number checked by the test")


def pytest_runtest_logreport(report):
    number = getattr(report, "criterion", None)
    if number is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _criteria.setdefault(number, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        outcomes = _criteria[number]
        if "failed" in outcomes:
            verdict = "FAIL"
        elif "skipped" in outcomes:
            verdict = "SKIP"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"criterion {number}: {verdict} ({len(outcomes)} checks)")


SMALL_CONFIG = """\
dataset = {dataset}
protocol = ratio-70-10-20
lookback = 32
horizon = 8
experts = elm,patchtst,mingru,slstm
kernel = 5
patch_len = 8
stride = 4
d_model = 8
n_heads = 2
d_ff = 16
mingru_hidden = 8
slstm_hidden = 8
d_gate = 8
gate_heads = 2
k = 3
lr = 1e-3
batch = 16
epochs = 2
patience = 2
train_stride = 2
out_dir = {out_dir}
"""


@pytest.fixture
def small_run(tmp_path) -> Path:
    """Config file for a tiny end-to-end run on a synthetic CSV; returns its path."""
    values, _ = regime_switching(RegimeSpec(length=240, segment=40, period=12))
    write_csv(tmp_path / "synthetic.csv", values)
    path = tmp_path / "run.cfg"
    path.write_text(SMALL_CONFIG.format(dataset="synthetic.csv", out_dir="out"))
    return path
