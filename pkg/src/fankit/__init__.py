"""Frequency-adaptive reversible instance normalization for forecasting.

The package removes the dominant Fourier components of every input window,
lets a backbone forecast the stationary residual, predicts how the removed
components evolve over the horizon with a small MLP, and adds them back to
the output.  Baselines (per-instance z-score, identity), ablation variants,
a synthetic benchmark generator, and stationarity diagnostics are included.

Submodules are imported lazily so that the CLI can configure threading
environment variables before numpy is first loaded.
"""

__version__ = "0.1.0"

_SUBMODULES = ("spectral", "models", "normalizers", "training", "data", "cli")


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        module = importlib.import_module(f"{__name__}.{name}")
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
