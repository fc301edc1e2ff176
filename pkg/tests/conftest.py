import pytest

from ltml.datagen import DatasetConfig, generate


@pytest.fixture(scope="session")
def small_dataset():
    cfg = DatasetConfig(num_samples=3000, num_classes=6, feature_dim=12, head_count=900, decay=0.55,
                        shared_factors=2, seed=7)
    return generate(cfg)


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line[1])


@pytest.fixture
def criterion(request):
    """Record a one-line PASS/FAIL verdict for the acceptance summary, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}" + (f"  ({detail})" if detail else "")
        request.config._acceptance_lines.append((number, line))
        print(line)
        assert ok, line

    return record
