"""Spin-ensemble / cavity simulator for spectral hole burning and
collective dark states."""

__version__ = "0.1.0"

from .analysis import (DecayFit, LorentzianFit, OscillationFit,  # noqa: E402
                       extract_oscillation, fit_decay, fit_lorentzian,
                       fit_two_regime, polariton_splitting, spectral_peaks)
from .dynamics import (CavityParams, DrivePulse, TimeSeries,  # noqa: E402
                       TransmissionSpectrum, drive_value, integrate,
                       propagator_decay, steady_state_amplitude,
                       transmission_scan)
from .exceptions import (ConfigError, DarkStatesError, FitError,  # noqa: E402
                         NumericalError)
from .spectra import (EigenSpectrum, dark_state_cavity_fraction,  # noqa: E402
                      eigenspectrum, find_dark_states)
from .spectral import (FrequencyGrid, HoleSpec, NVParams,  # noqa: E402
                       QGaussianParams, SpectralDensity, SpinPacketSet,
                       apply_holes, discretize, eval_density, nv_transitions)
from .volterra import (KernelTable, build_kernel, driving_term,  # noqa: E402
                       solve_volterra)
