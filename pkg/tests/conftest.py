import os

import pytest
from hypothesis import HealthCheck, settings

from matbeam.experiment import default_config_path, load_config
from matbeam.materials import TABLE_ANGLES_DEG, build_rl_database, builtin_materials

settings.register_profile(
    "ci", derandomize=True, deadline=None, max_examples=100,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture(scope="session")
def office_config():
    return load_config(default_config_path())


@pytest.fixture(scope="session")
def office_scene(office_config):
    return office_config.scene()


@pytest.fixture(scope="session")
def table_db():
    return build_rl_database(builtin_materials(), TABLE_ANGLES_DEG, 100.0)


SUITE_RUNTIME_LIMIT_S = 60.0


def pytest_sessionstart(session):
    import time

    session.config._matbeam_t0 = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    import time

    elapsed = time.perf_counter() - session.config._matbeam_t0
    ok = elapsed < SUITE_RUNTIME_LIMIT_S
    print(f"\n[acceptance 8] {'PASS' if ok else 'FAIL'}: suite runtime {elapsed:.1f} s < {SUITE_RUNTIME_LIMIT_S:.0f} s")
    if not ok and session.exitstatus == 0:
        session.exitstatus = 1
