from .manifest import DatasetManifest, SliceRecord, split_manifest, validate_splits
from .toy import ToyDataConfig, toy_generate
from .picai import VolumeCase, picai_extract
from .chexpert import chexpert_preprocess
from .pcam import pcam_preprocess

__all__ = [
    "DatasetManifest",
    "SliceRecord",
    "split_manifest",
    "validate_splits",
    "ToyDataConfig",
    "toy_generate",
    "VolumeCase",
    "picai_extract",
    "chexpert_preprocess",
    "pcam_preprocess",
]
