"""
Dataset presets

Maps a dataset name to the loss trade-off weight lambda that balances the
cross-entropy term against the label-collaboration KL term. Select a preset
with ``--dataset-preset``; an explicit ``--lambda`` always wins.
"""

# Preset lambda mapping
# ================================================================
# To add a dataset: add "name": lambda here; nothing else needs to change.
# ================================================================
LAMBDA_PRESETS = {
    "diginetica": 0.1,
    "yoochoose": 5.0,
    "tmall": 10.0,
}

# Used when a preset name is not found above
DEFAULT_LAMBDA = 0.1


def get_lambda(dataset_name: str) -> float:
    """
    Get the lambda for a dataset preset.

    Args:
        dataset_name: Preset name (e.g., "diginetica", "tmall")

    Returns:
        The preset lambda, or the default if the name is unknown
    """
    return LAMBDA_PRESETS.get(dataset_name.lower(), DEFAULT_LAMBDA)


def list_presets() -> dict:
    """Get all preset name -> lambda mappings."""
    return LAMBDA_PRESETS.copy()
