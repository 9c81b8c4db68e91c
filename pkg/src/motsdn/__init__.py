"""Marginally outer trapped surfaces in double-null gauge.

Spectral parametrization of spacelike 2-surfaces in a double-null
Schwarzschild (or perturbed near-Schwarzschild) spacetime, evaluation of
null expansions on those surfaces, and a frozen-coefficient iteration that
solves the zero-expansion equation.
"""

__version__ = "0.1.0"
