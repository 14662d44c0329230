"""Binaural signal matching (BSM) and its magnitude-least-squares extension
for arbitrary microphone arrays.

Submodules: ``sh`` (spherical harmonics and sampling), ``array`` (steering
vectors), ``hrtf`` (HRTF sets and the sphere-head model), ``design`` (filter
design), ``render`` (rendering and WAV I/O), ``scene`` (plane-wave scenes),
``metrics`` and ``evaluation`` (error measures and cue analysis), ``figures``
(simulation-study curves) and ``cli``.

The package namespace is kept free of numerical imports so that the command
line can configure thread counts before numpy loads.
"""

__version__ = "0.1.0"
