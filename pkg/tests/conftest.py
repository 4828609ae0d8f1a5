"""Shared fixtures and the acceptance-suite result printer."""

import pytest

from ctxprobe import synthetic


@pytest.fixture(scope="session")
def synthetic_probe():
    """The bundled deterministic 50-fact probe (generated, not read from disk)."""
    return synthetic.make_synthetic_probe()


@pytest.fixture(scope="session")
def probe_paths(synthetic_probe, tmp_path_factory):
    """Synthetic probe materialized as files."""
    out_dir = tmp_path_factory.mktemp("probe")
    return synthetic_probe.write(str(out_dir))


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    print(f"\n[acceptance] {status} {name}")
