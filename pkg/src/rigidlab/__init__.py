"""Energy ledgers, Moebius pushforwards and rigidity experiments for conformal immersions."""

__version__ = "0.1.0"

from .surface import CATALOG, Immersion, ParamDomain, make_catalog_surface  # noqa: E402
from .functionals import energy_report, gauss_bonnet_ledger  # noqa: E402
from .moebius import MoebiusTransform, inversion_ledger, pushforward, safe_inversion_center  # noqa: E402
from .sobolev import weighted_distance, weighted_norm  # noqa: E402
from .rigidity import align_to_model, nearest_round_sphere, perturbation_sweep  # noqa: E402
from .oracle_mesh import angle_defect_total_curvature, mesh_from_immersion  # noqa: E402

__all__ = [
    "CATALOG", "Immersion", "ParamDomain", "make_catalog_surface", "energy_report", "gauss_bonnet_ledger",
    "MoebiusTransform", "inversion_ledger", "pushforward", "safe_inversion_center", "weighted_distance",
    "weighted_norm", "align_to_model", "nearest_round_sphere", "perturbation_sweep",
    "angle_defect_total_curvature", "mesh_from_immersion",
]
