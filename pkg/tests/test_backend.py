import os
import subprocess
import sys

import numpy as np
import pytest

from siqr import _backend, _pykernels


def backend_in_subprocess(value):
    env = dict(os.environ, SIQR_BACKEND=value)
    out = subprocess.run([sys.executable, "-c", "import siqr; print(siqr.BACKEND)"],
                         env=env, capture_output=True, text=True)
    return out.returncode, out.stdout.strip(), out.stderr


def test_python_backend_forced():
    code, name, _ = backend_in_subprocess("python")
    assert code == 0 and name == "python"


@pytest.mark.skipif(_backend.compiled is None, reason="compiled kernels not built")
def test_auto_prefers_compiled():
    assert backend_in_subprocess("auto")[1] == "compiled"
    assert backend_in_subprocess("compiled")[1] == "compiled"


def test_unknown_backend_rejected():
    code, _, err = backend_in_subprocess("fortran")
    assert code != 0 and "SIQR_BACKEND" in err


def test_get():
    assert _backend.get("python") is _pykernels
    with pytest.raises(ValueError):
        _backend.get("nope")


@pytest.mark.skipif(_backend.compiled is None, reason="compiled kernels not built")
def test_aux_recurrence_parity():
    rng = np.random.default_rng(3)
    a, c = rng.uniform(0.5, 1.0, 5000), rng.uniform(0.0, 1.0, 5000)
    assert np.array_equal(_pykernels.aux_recurrence(a, c, 2.0),
                          _backend.compiled.aux_recurrence(a, c, 2.0))
