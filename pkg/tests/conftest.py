import pytest

from uavcache.model import SystemConfig

_VERDICTS: list[str] = []


def record_verdict(criterion: int, passed: bool, detail: str) -> None:
    _VERDICTS.append(f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_VERDICTS, key=lambda s: int(s.split(":")[0].split()[1])):
        terminalreporter.write_line(line)


@pytest.fixture
def tiny_config():
    """Four anchors, two ferries, a 60-item catalog; an epoch lasts 180 s."""
    return SystemConfig(total_contents=60, num_anchor_uavs=4, num_ferry_uavs=2,
                        anchor_cache_capacity=8, ferry_cache_capacity=6, hover_time=60.0,
                        transition_time=30.0, tad_values=(50.0, 120.0), request_rate=0.5,
                        rng_seed=3)
