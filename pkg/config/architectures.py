"""
Per-dataset architecture and optimizer presets.
Keys are "<pde>/<flavor>"; values feed ArchitectureSpec.from_dict and OptimConfig.
"""

ARCHITECTURES: dict[str, dict] = {

    # Nonlinear message passing
    "heat/hermes": {"flavor": "hermes_block", "blocks": 1, "edge_depth": 4, "node_depth": 3},
    "wave/hermes": {"flavor": "hermes_block", "blocks": 2, "edge_depth": 2, "node_depth": 1},
    "cahn_hilliard/hermes": {"flavor": "hermes_block", "blocks": 1, "edge_depth": 4, "node_depth": 1},

    # Convolutional: three blocks of two layers
    "heat/gem_conv": {"flavor": "gem_conv", "blocks": 3, "layers_per_block": 2},
    "wave/gem_conv": {"flavor": "gem_conv", "blocks": 3, "layers_per_block": 2},
    "cahn_hilliard/gem_conv": {"flavor": "gem_conv", "blocks": 3, "layers_per_block": 2},

    # Attentional: three blocks of two layers
    "heat/eman_attention": {"flavor": "eman_attention", "blocks": 3, "layers_per_block": 2},
    "wave/eman_attention": {"flavor": "eman_attention", "blocks": 3, "layers_per_block": 2},
    "cahn_hilliard/eman_attention": {"flavor": "eman_attention", "blocks": 3, "layers_per_block": 2},
}

OPTIMIZERS: dict[str, dict] = {
    "heat": {"lr": 1e-4, "epochs": 100, "batch_size": 1, "schedule": "constant"},
    "wave": {"lr": 5e-4, "epochs": 100, "batch_size": 1, "schedule": "constant"},
    "cahn_hilliard": {"lr": 5e-3, "epochs": 100, "batch_size": 1, "schedule": "cosine"},
}
