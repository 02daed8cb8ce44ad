import numpy as np
import pytest

from pickt.numeric import set_debug_checks, set_default_dtype


@pytest.fixture(autouse=True)
def _reset_numeric_globals():
    # dtype and debug flags are process-global; never leak across tests
    set_default_dtype(np.float32)
    set_debug_checks(False)
    yield
    set_default_dtype(np.float32)
    set_debug_checks(False)
