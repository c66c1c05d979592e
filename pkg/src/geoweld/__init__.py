"""Piecewise geodesic Jordan curves through marked points on the sphere.

Welding charts, the conformal welding solver, Loewner energy, accessory
parameters (residues), projective holonomy, and pi-grafting of Fuchsian data.
"""

__version__ = "0.1.0"
