"""Simulation and evaluation of binaural LCMV beamformers for hearing aids.

Modules
-------
stft
    Analysis/synthesis filterbank.
acoustics
    Head-shadowed array responses, reverberant variants and scene rendering.
beamform
    Per-bin LCMV designs and adaptive weights.
ccmbb
    Coherence-based mixing of beamformer and noisy outputs.
metrics
    Gains, distortions and interaural cue errors.
harness
    Scenarios, presets, experiment runner and ordering checks.
cli
    ``beamlab`` command-line entry point.
"""

__version__ = "0.1.0"
