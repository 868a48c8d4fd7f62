"""Session-scoped synthetic cohorts shared across test modules.

The 8-subject cohort and its leave-one-out run back both the evaluation
tests and the acceptance gate; building them once keeps the suite inside
its runtime budget. The 3-subject cohort covers mechanics (CLI flows,
combinatorics, determinism) where small-cohort accuracy is not asserted.
"""

from __future__ import annotations

import time

import pytest

from ecgauth.ecgio import read_manifest
from ecgauth.enroll import PipelineParams, enroll_subject
from ecgauth.evaluation import leave_one_out
from ecgauth.synth import default_cohort, write_cohort


@pytest.fixture(scope="session")
def cohort8_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cohort8")
    write_cohort(default_cohort(n_subjects=8, seed=0), out)
    return out


@pytest.fixture(scope="session")
def entries8(cohort8_dir):
    return read_manifest(cohort8_dir / "manifest.csv")


@pytest.fixture(scope="session")
def loo8(entries8):
    """(reports, cells, wall seconds) of the single-threaded 8-subject run."""
    start = time.perf_counter()
    reports, cells = leave_one_out(entries8, PipelineParams(), jobs=1)
    return reports, cells, time.perf_counter() - start


@pytest.fixture(scope="session")
def cohort3_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cohort3")
    write_cohort(default_cohort(n_subjects=3, seed=7), out)
    return out


@pytest.fixture(scope="session")
def entries3(cohort3_dir):
    return read_manifest(cohort3_dir / "manifest.csv")


@pytest.fixture(scope="session")
def loo3(entries3):
    return leave_one_out(entries3, PipelineParams(), jobs=1)


@pytest.fixture(scope="session")
def model3(entries3):
    """Enrolled model for the first subject of the 3-subject cohort."""
    model, provenance = enroll_subject(entries3, "subj01", PipelineParams())
    return model, provenance
