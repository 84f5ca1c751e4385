"""cmforge: exact complex-multiplication machinery.

Character lattices of norm tori, CM types and reflex norms, Serre groups,
symplectic frames with similitude decompositions, and a finite model of the
Bost-Connes-type system with KMS states and an arithmetic subalgebra.  All
core arithmetic is exact (integers, fractions, cyclotomic numbers); floating
point appears only in the modular-function oracle and zeta tails.
"""

__version__ = "0.1.0"
