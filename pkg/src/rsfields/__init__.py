"""Riemann-Stieltjes integration on rectangles and stationary OU-type random fields."""

from .fields import FieldEnsemble, brownian_sheet, fbm_sheet, gaussian_field
from .grid import GridField, GridPartition, rect_increment, sample
from .indexkit import MultiIndexSet
from .ou import lamperti, inv_lamperti, langevin_residual, m_theta, m_theta_inv, ou_solve
from .rsint import IntegralResult, TagPolicy, ibp_rhs, mixed_integral, rs_integral
from .triangle import complement_integral, triangle_integral
from .variation import hk_variation, vitali_variation

__version__ = "0.1.0"
