import pytest

from notemine.ingest import ClinicalNote

# Filled by tests/test_acceptance.py; printed at the end of the session.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


EXAMPLE_NOTE = (
    "EXAM: Chest one view frontal 24.: sob\n"
    "FINDINGS: Compared to the examination of August 20 significant interval resolution of "
    "previously noted increased pulmonary vascular markings associated with pulmonary edema. "
    "There are no new infiltrates. Residual linear density left base could be from the skull "
    "atelectasis.\n"
    "IMPRESSION: Interval resolution of the findings of pulmonary edema with no new infiltrates.\n"
)


@pytest.fixture
def example_note():
    return ClinicalNote("n1", EXAMPLE_NOTE, patient_id="p1")
