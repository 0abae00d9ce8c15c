"""Conforming finite elements: CG_1, CG_2 (scalar/vector) and RT_0, RT_1
(vector/row-wise tensor) on triangle meshes."""

from .assembly import (
    apply_essential_bc,
    assemble_matrix,
    assemble_vector,
    bilinear,
    default_degree,
    fe_values,
    field_values,
    linear,
    local_bilinear,
    restrict,
    SparsityPattern,
)
from .basis import (
    BoundaryQuadrature,
    CellQuadrature,
    boundary_quadrature,
    cell_quadrature,
    physical_basis,
    quantity,
)
from .elements import ReferenceElement, reference_element
from .interpolation import interpolate, prolongate
from .quadrature import QuadratureRule, collapsed_rule, gauss_line, triangle_rule
from .space import FeFunction, FunctionSpace, build_space, expand_free


def tabulate_basis(space, cell, quad):
    """Physical basis at the nodes of ``quad`` (a QuadratureRule) on one cell.

    Returns ``(values, derivatives)``: CG values (nq, nb) and gradients
    (nq, nb, 2); RT values (nq, nb, 2) and divergences (nq, nb).  Multi-
    component spaces share the scalar/vector basis of one component.
    """
    v, d = physical_basis(space, [cell], quad.ref_points)
    return v[0], d[0]


__all__ = [
    "QuadratureRule", "triangle_rule", "collapsed_rule", "gauss_line",
    "ReferenceElement", "reference_element",
    "FunctionSpace", "FeFunction", "build_space", "expand_free",
    "CellQuadrature", "BoundaryQuadrature", "cell_quadrature", "boundary_quadrature",
    "physical_basis", "quantity", "tabulate_basis",
    "assemble_matrix", "assemble_vector", "apply_essential_bc", "restrict",
    "bilinear", "linear", "local_bilinear", "SparsityPattern", "default_degree", "fe_values", "field_values",
    "interpolate", "prolongate",
]
