"""
Shared pytest fixtures
Puts src/ on the import path the same way main.py does
"""
import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(__file__)), 'src'))

FIXTURES = os.path.join(os.path.dirname(__file__), 'fixtures')


@pytest.fixture
def fixture_path():
    def path(name: str) -> str:
        return os.path.join(FIXTURES, name)
    return path
