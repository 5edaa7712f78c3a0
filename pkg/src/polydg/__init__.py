"""Interior-penalty discontinuous Galerkin solver for the biharmonic problem
on general polygonal meshes, with facewise penalty functions that stay stable
on cells with arbitrarily many tiny faces."""

__version__ = "0.1.0"
