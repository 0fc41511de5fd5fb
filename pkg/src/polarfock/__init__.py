"""Finite-truncation machinery for external-field fermion dynamics.

Modules
-------
linop        polarized linear algebra, norms, determinants, indices
polarization subspaces, relative charge, commensurability, admissible bases
central_ext  (A, q)-pair extension, sections, group and Lie-algebra cocycles
loopgroup    multiplication operators on the circle, cocycle witness
fock         occupation-basis CAR algebra and Bogoliubov implementers
transport    right-invariant parallel transport of implementer phases
dirac1d      1+1D momentum-lattice Dirac evolution with Q renormalization
cli          batch driver
"""

__version__ = "0.1.0"
