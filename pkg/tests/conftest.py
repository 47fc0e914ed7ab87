import sys
from pathlib import Path

import pytest

# allow `import oracles` from test modules
sys.path.insert(0, str(Path(__file__).parent))

from nuexo.config import load_system_config


@pytest.fixture(scope="session")
def system_config():
    return load_system_config()
