"""Distributed set-invariance control for networks of linear systems."""

from distinv.graph import CommGraph
from distinv.network import Coupling, NetworkSystem, Subsystem, assemble
from distinv.poly import MinkowskiMapSet, Polytope
from distinv.synth import SynthesisResult, Theta, synthesize

__version__ = "0.1.0"

__all__ = [
    "CommGraph",
    "Coupling",
    "MinkowskiMapSet",
    "NetworkSystem",
    "Polytope",
    "Subsystem",
    "SynthesisResult",
    "Theta",
    "assemble",
    "synthesize",
]
