import numpy as np
import pytest

from doforecast.numeric import finite_diff_grad
from doforecast.training import mse_loss

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(cid, name, passed, detail=""):
        _ACCEPTANCE.append((cid, name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, name, passed, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0][1:])):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {cid} {name}: {detail}")


def grad_close(analytic, numeric, rel=1e-5, abs_=1e-7):
    """Elementwise |a - n| <= max(rel * max(|a|, |n|), abs_)."""
    tol = np.maximum(rel * np.maximum(np.abs(analytic), np.abs(numeric)), abs_)
    return np.abs(analytic - numeric) <= tol


def check_model_gradients(model, x, y, eps=1e-6, training=False, dropout_seed=None):
    """Compare every parameter gradient of ``model`` against central differences.

    Returns ``{name: (ok, max_abs_err)}``. With ``dropout_seed`` the dropout RNG
    is re-seeded before each evaluation so the masks stay frozen.
    """
    from doforecast.numeric import make_rng

    def rng():
        return make_rng(dropout_seed) if dropout_seed is not None else None

    pred, cache = model.forward(x, training=training, rng=rng())
    _, dpred = mse_loss(pred, y)
    grads = model.backward(cache, dpred)

    def loss(_):
        return mse_loss(model.forward(x, training=training, rng=rng())[0], y)[0]

    out = {}
    for name, arr in model.params.items():
        fd = finite_diff_grad(loss, arr, eps)
        ok = grad_close(grads[name], fd)
        out[name] = (bool(ok.all()), float(np.max(np.abs(grads[name] - fd))))
    return out
