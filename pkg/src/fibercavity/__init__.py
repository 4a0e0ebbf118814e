"""Modelling and analysis toolkit for open fiber Fabry-Perot microcavities with
narrow-line emitters.

Submodules: ``layers`` (transfer matrices), ``metrics`` (finesse, losses, mode
geometry), ``purcell`` (ideal and jittered Purcell factors), ``efficiency``
(photon budget), ``dipole`` (emitter near a planar mirror), ``analysis``
(measurement records and fits) and ``cli``.
"""

__version__ = "0.1.0"
