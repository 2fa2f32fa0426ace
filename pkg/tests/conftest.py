import numpy as np
import pytest

from weldkge.ingest import prune_columns
from weldkge.kg import BuildOptions, build_kg, fit_schemes, split_table
from weldkge.synth import SynthConfig, generate

SMALL = dict(n_rows=500, n_machines=5, n_programs=10, n_carbodies=20, n_diameter_classes=5, noise_rate=0.0, seed=7)


@pytest.fixture(scope="session")
def small_table():
    ds, truth = generate(SynthConfig(**SMALL))
    return ds, truth


@pytest.fixture(scope="session")
def small_build(small_table):
    """(kg, schemes, (train, valid, test)) for the 500-row planted dataset."""
    ds = prune_columns(small_table[0])
    parts = split_table(ds, (0.8, 0.1, 0.1), 0)
    schemes, _ = fit_schemes(parts[0], BuildOptions())
    return build_kg(*parts, schemes).kg, schemes, parts


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":").lstrip("C"))):
            terminalreporter.write_line(line)
