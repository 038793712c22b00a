import pytest

from straintc import phantom


@pytest.fixture
def small_spec():
    """16x16 sample-A phantom, full 300-frame timeline."""
    return phantom.preset("A", width_px=16, height_px=16)
