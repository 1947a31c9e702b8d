"""Worker-count and transform-backend policy shared by the spectral code."""
from __future__ import annotations

import os
from functools import lru_cache

import numpy as np

ENV_VAR = "NSBL_THREADS"
BACKEND_VAR = "NSBL_FFT"


def fft_workers() -> int:
    """Thread cap from NSBL_THREADS (default 1; invalid values fall back to 1).

    Multi-threaded transforms split independent 1-D transforms, so results
    do not depend on the worker count beyond rounding.
    """
    raw = os.environ.get(ENV_VAR, "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, min(n, os.cpu_count() or 1))


@lru_cache(maxsize=None)
def _load(name: str):
    if name == "fftw":
        try:
            import pyfftw
            from pyfftw.interfaces import scipy_fft
        except ImportError:
            return _load("scipy")
        pyfftw.interfaces.cache.enable()
        pyfftw.interfaces.cache.set_keepalive_time(300)
        return scipy_fft
    import scipy.fft
    return scipy.fft


def fft_backend():
    """FFTW through pyFFTW when available (NSBL_FFT=scipy forces pocketfft)."""
    return _load("scipy" if os.environ.get(BACKEND_VAR, "").lower() == "scipy" else "fftw")


class TransformPlan:
    """Reusable batched 3-D real transforms over fixed buffers.

    Fill ``real_in`` and call :meth:`forward` for unnormalised coefficients;
    fill ``spec_in`` and call :meth:`inverse` for samples (no 1/n^3 factor).
    ``spec_in`` is clobbered by the inverse transform.  Plans use FFTW's
    estimate mode so the algorithm choice, and hence every rounding, is the
    same from run to run.
    """

    def __init__(self, n: int, n_forward: int, n_inverse: int):
        spec = (n, n, n // 2 + 1)
        self.n = n
        backend = fft_backend()
        self._fftw = None
        if backend.__name__.startswith("pyfftw"):
            import pyfftw

            self.real_in = pyfftw.empty_aligned((n_forward, n, n, n))
            out = pyfftw.empty_aligned((n_forward, *spec), dtype=complex)
            self.spec_in = pyfftw.empty_aligned((n_inverse, *spec), dtype=complex)
            back = pyfftw.empty_aligned((n_inverse, n, n, n))
            threads = fft_workers()
            self._fftw = (
                pyfftw.FFTW(self.real_in, out, axes=(1, 2, 3), threads=threads,
                            flags=("FFTW_ESTIMATE",)),
                pyfftw.FFTW(self.spec_in, back, axes=(1, 2, 3), direction="FFTW_BACKWARD",
                            threads=threads, flags=("FFTW_ESTIMATE", "FFTW_DESTROY_INPUT")),
            )
        else:
            self.real_in = np.empty((n_forward, n, n, n))
            self.spec_in = np.empty((n_inverse, *spec), dtype=complex)
        self._backend = backend

    def forward(self) -> np.ndarray:
        if self._fftw:
            return self._fftw[0]()
        return self._backend.rfftn(self.real_in, axes=(1, 2, 3), workers=fft_workers())

    def inverse(self) -> np.ndarray:
        if self._fftw:
            return self._fftw[1](normalise_idft=False)
        n = self.n
        return self._backend.irfftn(self.spec_in, s=(n, n, n), axes=(1, 2, 3), norm="forward",
                                    workers=fft_workers())
