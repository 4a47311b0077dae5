"""Hot inner loops, dispatched to the compiled extension when it is available.

Set ``UPLINKNL_PURE_PYTHON=1`` before import to force the numpy versions.
"""

from __future__ import annotations

import os

import numpy as np

try:
    if os.environ.get("UPLINKNL_PURE_PYTHON"):
        raise ImportError("pure-Python kernels requested")
    from . import _kernels as _ext
except ImportError:
    _ext = None

HAVE_EXTENSION = _ext is not None
_CHUNK = 16384


def py_spm_rotate(samples: np.ndarray, scale: float) -> np.ndarray:
    power = np.sum(samples.real ** 2 + samples.imag ** 2, axis=0)
    return samples * np.exp(1j * scale * power)


def _axis_weights(y, pam, inv_var):
    d = (y[:, None] - pam[None, :]) ** 2 * inv_var
    return np.exp(d.min(axis=1, keepdims=True) - d)


def py_qam_bit_log_posteriors(yr, yi, ti, tq, pam, prior, lab, inv_var) -> np.ndarray:
    n = len(yr)
    out = np.empty(n)
    lab = lab.astype(bool)
    for lo in range(0, n, _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        wi = _axis_weights(yr[sl], pam, inv_var)
        wq = _axis_weights(yi[sl], pam, inv_var)
        a = wi * (wq @ prior.T)
        b = wq * (wi @ prior)
        total = a.sum(axis=1)
        ones_i = a @ lab
        ones_q = b @ lab
        pick_i = np.where(lab[ti[sl]], ones_i, total[:, None] - ones_i)
        pick_q = np.where(lab[tq[sl]], ones_q, total[:, None] - ones_q)
        acc = np.log(np.maximum(pick_i, 1e-300) / total[:, None]).sum(axis=1)
        acc += np.log(np.maximum(pick_q, 1e-300) / total[:, None]).sum(axis=1)
        out[sl] = acc / np.log(2)
    return out


def spm_rotate(samples: np.ndarray, scale: float) -> np.ndarray:
    """Rotate both polarizations by ``scale * (|x|^2 + |y|^2)`` radians."""
    if _ext is not None:
        return _ext.spm_rotate(np.ascontiguousarray(samples, dtype=np.complex128), float(scale))
    return py_spm_rotate(samples, scale)


def qam_bit_log_posteriors(yr, yi, ti, tq, pam, prior, lab, inv_var) -> np.ndarray:
    """Per-symbol sum over bit levels of ``log2 P(b_j = b_j(x) | y)`` for square QAM.

    ``ti``/``tq`` index the transmitted PAM level per quadrature, ``prior`` is
    the joint pmf over ``(I, Q)`` level pairs and ``lab`` the 1D Gray labels.
    """
    if _ext is not None:
        return _ext.qam_bit_log_posteriors(
            np.ascontiguousarray(yr, dtype=np.float64),
            np.ascontiguousarray(yi, dtype=np.float64),
            np.ascontiguousarray(ti, dtype=np.int_),
            np.ascontiguousarray(tq, dtype=np.int_),
            np.ascontiguousarray(pam, dtype=np.float64),
            np.ascontiguousarray(prior, dtype=np.float64),
            np.ascontiguousarray(lab, dtype=np.uint8),
            float(inv_var),
        )
    return py_qam_bit_log_posteriors(yr, yi, ti, tq, pam, prior, lab, inv_var)
