from dataclasses import dataclass
from typing import List, Optional, TYPE_CHECKING

from utils.errors import ConfigError

if TYPE_CHECKING:
    from config.settings import RunConfig


@dataclass
class ModelVariant:
    """A named combination of model switches."""

    name: str
    description: str
    use_graph: bool = True
    use_personalization: bool = True
    use_label_collab: bool = True
    use_side_info: bool = True


# Full model first; the rest each switch one component off
AVAILABLE_VARIANTS: List[ModelVariant] = [
    ModelVariant(
        name="cares",
        description="Full model",
    ),
    ModelVariant(
        name="cares_ng",
        description="No cross-session aggregation over the item graph",
        use_graph=False,
    ),
    ModelVariant(
        name="cares_np",
        description="No per-session personalization of item embeddings",
        use_personalization=False,
    ),
    ModelVariant(
        name="cares_nl",
        description="No label collaboration (cross-entropy only)",
        use_label_collab=False,
    ),
    ModelVariant(
        name="cares_ns",
        description="No item category side information",
        use_side_info=False,
    ),
]


def get_variant_by_name(name: str) -> Optional[ModelVariant]:
    """Get variant by name."""
    return next((v for v in AVAILABLE_VARIANTS if v.name == name), None)


def get_variants_list() -> List[ModelVariant]:
    """Get list of all variants."""
    return AVAILABLE_VARIANTS.copy()


def apply_variant(config: "RunConfig", name: str) -> "RunConfig":
    """Switch components off according to the named variant."""
    variant = get_variant_by_name(name)
    if variant is None:
        known = ", ".join(v.name for v in AVAILABLE_VARIANTS)
        raise ConfigError(f"Unknown variant {name!r} (known: {known})")

    if not variant.use_graph:
        config.model.use_graph = False
    if not variant.use_personalization:
        config.model.use_personalization = False
    if not variant.use_label_collab:
        config.train.lambda_ = 0.0
    if not variant.use_side_info:
        config.model.use_side_info = False
        config.graph.use_side_info = False
    return config
