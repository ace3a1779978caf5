"""deepextract: fine-tune pretrained CNNs on nucleus patch archives and
export their last-FC-layer features for the classification pipeline.
"""

__version__ = "0.1.0"

from .archive import read_archive
from .export import export_features
from .finetune import FinetuneConfig, finetune, load_checkpoint, save_checkpoint
from .nets import NET_SPECS, MissingWeightsError, NetSpec, build_model, get_spec

__all__ = [
    "FinetuneConfig",
    "MissingWeightsError",
    "NET_SPECS",
    "NetSpec",
    "build_model",
    "export_features",
    "finetune",
    "get_spec",
    "load_checkpoint",
    "read_archive",
    "save_checkpoint",
]
