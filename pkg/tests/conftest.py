from hypothesis import settings

settings.register_profile("shelab", deadline=None, max_examples=40)
settings.load_profile("shelab")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
