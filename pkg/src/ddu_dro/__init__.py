"""Distributionally robust planning of hydrogen-electrical island microgrids.

Two-stage planning engine: first-stage siting/sizing/routing/hardening
decisions, second-stage dispatch under a decision-dependent moment ambiguity
set, solved exactly by column-and-constraint generation with an inner
column-generation engine, plus a brute-force oracle for desk-scale instances.
"""

__version__ = "0.1.0"
