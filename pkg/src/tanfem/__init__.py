"""tanfem: componentwise surface finite elements for tangential tensor PDEs.

Tangential vector- and tensor-valued PDEs on triangulated 2-manifolds are
rewritten in ambient Cartesian components, where the covariant derivative
takes an exact closed form in the normal and the shape operator.  Each
Cartesian component is then discretized with standard P1 surface Lagrange
elements; tangentiality is enforced by a quadratic penalty.
"""

from .errors import (AmbiguousWinding, BreakdownError, ConfigError,
                     DegenerateElement, DimensionMismatch, NoBoundary,
                     NoConvergence, NotQTensor, ParseError, SingularGradient,
                     TanFemError, TopologyError, UnsupportedDegree)
from .fields import QProxyField, TensorField
from .geometry import GeometryData, analytic_geometry, check_identities, \
    discrete_geometry
from .mesh import RefinementSpec, SurfaceMesh, euler_characteristic, refine
from .meshio import export_vtk, load_mesh
from .surfaces import AnalyticSurface, ellipsoid, level_set_surface, sphere

__version__ = "0.1.0"

__all__ = [
    "AmbientField", "AnalyticSurface", "AmbiguousWinding", "BreakdownError",
    "ConfigError", "DegenerateElement", "DimensionMismatch", "GeometryData",
    "NoBoundary", "NoConvergence", "NotQTensor", "ParseError", "QProxyField",
    "RefinementSpec", "SingularGradient", "SurfaceMesh", "TanFemError",
    "TensorField", "TopologyError", "UnsupportedDegree", "analytic_geometry",
    "check_identities", "discrete_geometry", "ellipsoid",
    "euler_characteristic", "export_vtk", "level_set_surface", "load_mesh",
    "refine", "sphere",
]

from .diffops import AmbientField  # noqa: E402  (re-exported for convenience)
