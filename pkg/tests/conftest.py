import pytest

from plscale import CurvePoint, Objective, TrainingRun

# (label, d_model, ffw_dim, kv_size, head_num, layers) for the published model family
PUBLISHED_CONFIGS = [
    ("4M", 192, 512, 24, 8, 8),
    ("5M", 256, 683, 32, 8, 7),
    ("6M", 256, 683, 32, 8, 8),
    ("10M", 320, 853, 40, 8, 8),
    ("13M", 320, 1280, 40, 8, 8),
    ("19M", 448, 1194, 64, 7, 8),
    ("25M", 512, 1365, 64, 8, 8),
    ("34M", 512, 2048, 64, 8, 8),
    ("40M", 576, 1536, 64, 8, 10),
    ("47M", 576, 1536, 64, 9, 12),
    ("66M", 640, 2560, 64, 10, 10),
    ("77M", 480, 1280, 24, 20, 28),
    ("85M", 768, 2048, 64, 12, 12),
    ("106M", 768, 2048, 48, 16, 15),
    ("127M", 768, 2048, 48, 16, 18),
    ("154M", 896, 2389, 64, 14, 16),
    ("157M", 640, 1707, 32, 20, 32),
    ("170M", 768, 2048, 48, 16, 24),
    ("200M", 896, 2389, 64, 14, 21),
    ("230M", 896, 2389, 64, 14, 24),
    ("300M", 1024, 2731, 64, 16, 24),
    ("393M", 1280, 3413, 80, 16, 20),
    ("470M", 1280, 3413, 80, 16, 24),
    ("550M", 1280, 3413, 80, 16, 28),
    ("670M", 1536, 4096, 96, 16, 24),
    ("880M", 1792, 4778, 64, 28, 23),
    ("1.2B", 2048, 5461, 64, 32, 24),
    ("1.5B", 2304, 6144, 64, 36, 24),
    ("1.7B", 2304, 6144, 64, 36, 28),
    ("2.0B", 2560, 6832, 64, 40, 26),
    ("2.4B", 2560, 6832, 64, 40, 30),
    ("2.8B", 2560, 6832, 64, 40, 36),
    ("3.1B", 2688, 7168, 64, 42, 36),
    ("3.4B", 2816, 15040, 128, 22, 22),
    ("4.0B", 3072, 8192, 128, 24, 36),
    ("5.7B", 3328, 8874, 128, 26, 40),
    ("6.2B", 3584, 9556, 128, 28, 40),
    ("7.2B", 4096, 10923, 128, 36, 36),
    ("10.7B", 4352, 11605, 136, 32, 47),
]


def label_value(label: str) -> float:
    scale = {"M": 1e6, "B": 1e9}[label[-1]]
    return float(label[:-1]) * scale


def make_run(run_id="r0", n_params=1_000_000, curve=((100, 3.0), (200, 2.5)), objective=Objective.CLM, **kw):
    return TrainingRun(id=run_id, objective=objective, n_params=n_params, curve=tuple(CurvePoint(*p) for p in curve), **kw)


@pytest.fixture
def run_factory():
    return make_run


# ---- acceptance report: one PASS/FAIL line per criterion in the terminal summary

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[number] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[number]
        terminalreporter.write_line(f"{status} criterion {number}: {title} [{detail}]")
