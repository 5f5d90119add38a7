"""Quasinormal modes of SAW phononic crystals, loss budgets, and S11 resonance fits."""

__version__ = "0.1.0"

from .structure import (  # noqa: E402
    CrystalRecipe,
    Segment,
    StructureError,
    StructureSpec,
    build_empty_cavity,
    build_mirrored_crystal,
    build_uniform_crystal,
    catalog_structure,
    recipe_catalog,
)
from .tmm import TransferMatrix, characteristic, half_step_matrix, total_matrix  # noqa: E402
from .qnm import (  # noqa: E402
    NodeAmplitudes,
    QnmMode,
    find_modes,
    mode_norm,
    normalize_mode,
    reconstruct_nodes,
    sample_field,
)
from .analytics import LossBudget, ResonatorGeometry, combine_crystal, combine_resonator  # noqa: E402
from .resfit import ResonanceModel, S11Trace, batch_fit, fit_trace, model_s11  # noqa: E402
