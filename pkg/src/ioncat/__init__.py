"""Schrodinger-cat states of a trapped-ion oscillator: simulation, synthetic data, population fits and
Wigner reconstruction in number, displaced and squeezed Fock bases."""

from .fock import (FockVector, PopulationVector, ProbeBasis, cat_state, coherent_state, displacement_operator,
                   fock_state, parity, populations_in_basis, squeeze_operator, squeezed_mean_occupation)
from .fit import PopulationEstimate, fit_mixture, fit_populations
from .spin import DecoherenceSpec, HamiltonianSpec
from .synth import DecayModel, HeraldModel, SpinTrace, revival_times, run_full_sequence, trace_model
from .wigner import WignerGrid, fringe_fit, wigner_oracle

__version__ = "0.1.0"
