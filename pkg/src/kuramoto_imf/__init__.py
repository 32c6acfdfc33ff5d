"""Power spectra of the disordered Kuramoto model in the asynchronous state.

Two routes to the same spectra: direct network dynamics
(:func:`simulate_network`) and the iterative stochastic mean field
(:func:`imf_iterate`), which replaces the network by one oscillator driven by
self-consistent Gaussian noise.
"""
from .imf import (ImfParams, ImfState, imf_iterate, noise_relation_check, simulate_effective,
                  single_oscillator_spectrum)
from .integrate import (IntegrationError, RecordRequest, StepSizeError, TrajectoryRecording,
                        euler_maruyama_step, load_trajectory, rk4_step, save_trajectory,
                        simulate_network)
from .model import (DisorderRealization, Integrator, OrderParameterSample, PhaseState, SimParams,
                    init_phases, network_noise, order_parameter, sample_disorder)
from .spectral import (AliasingError, ComplexSeries, GaussianFreq, GridMismatchError, Kubo,
                       Lorentzian, Spectrum, analytic_spectrum, average_spectra, periodogram,
                       read_spectrum, smooth_spectrum, spectral_distance, write_spectrum)
from .streams import stream
from .surrogate import noise_from_spectrum

__version__ = "0.1.0"

__all__ = [
    "AliasingError", "ComplexSeries", "DisorderRealization", "GaussianFreq", "GridMismatchError",
    "ImfParams", "ImfState", "IntegrationError", "Integrator", "Kubo", "Lorentzian",
    "OrderParameterSample", "PhaseState", "RecordRequest", "SimParams", "Spectrum", "StepSizeError",
    "TrajectoryRecording", "analytic_spectrum", "average_spectra", "euler_maruyama_step",
    "imf_iterate", "init_phases", "load_trajectory", "network_noise", "noise_from_spectrum",
    "noise_relation_check", "order_parameter", "periodogram", "read_spectrum", "rk4_step",
    "sample_disorder", "save_trajectory", "simulate_effective", "simulate_network",
    "single_oscillator_spectrum", "smooth_spectrum", "spectral_distance", "stream",
    "write_spectrum",
]
