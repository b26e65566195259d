"""Pulse-sequence compiler for polynomial spin Hamiltonians."""

from .generators import (QND, CompileError, Linear, Pair, PolynomialHamiltonian, Twist, Word,
                         materialize, rotation_to, symmetrize)
from .sequence import (Block, PulseSequence, Step, conjugate, conjugate_by_rotation, effective_generator,
                       evolve_block, fidelity, group_commutator_gadget, max_norm,
                       sequence_to_unitary, trotter_compose, UnitarityError)
from .synthesis import (Comm, Leaf, Scaled, Sum, compile_target, cubic_identity_sides, leaf,
                        qnd_block, qnd_four_step, qnd_segment_sum, realize, synth_x3, synth_x3z,
                        target_operator, target_tree, x3_tree, x3z_tree)
