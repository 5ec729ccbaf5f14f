import torch

# one pass/fail line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}

torch.set_num_threads(1)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
