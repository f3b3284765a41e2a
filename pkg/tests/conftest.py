import os

import pytest
from hypothesis import HealthCheck, settings

from vtmig.config import default_config

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


def small_config(**overrides):
    """A desk-sized world with short episodes; dotted overrides on top."""
    base = {
        "world.n_vehicles": 6, "world.n_edges": 3, "world.n_clouds": 1,
        "learner.steps_per_episode": 10, "learner.episodes": 3,
        "learner.warmup": 16, "learner.batch_size": 8,
        "baselines.ga_population": 4, "baselines.ga_generations": 2,
    }
    base.update(overrides)
    return default_config().replace(**base)


@pytest.fixture
def cfg():
    return small_config()


# acceptance outcomes, printed one line per criterion at the end of the session
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record_acceptance(key: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[key] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {key}: {detail}")
