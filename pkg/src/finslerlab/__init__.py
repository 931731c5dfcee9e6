"""finslerlab: numerical Finsler spectral geometry on the sphere bundle of T^3.

Core layers: jets (forward-mode AD), geometry (pointwise Finsler tensors),
fields (differential operators on SM), conformal (deformations, Yamabe
residuals, heat invariants), mesh (sphere-bundle quadrature and Sobolev
norms), spectral (discrete horizontal Laplacian, spectra, Green functions),
bounds (a priori estimate checks and the compactness probe).  A FastAPI
service in :mod:`finslerlab.service` wraps the library; the CLI is a thin
client of that service.
"""

__version__ = "0.1.0"
