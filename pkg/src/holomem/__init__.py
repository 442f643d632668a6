"""Holographic data-storage read-channel simulator with from-scratch
CNN/MLP fragment classifiers and a fragment-error-rate benchmark."""

from . import datapage, nn, optics, pipeline
from .datapage import ChannelConfig, DataPage, Fragment, PageGeometry
from .optics import ComplexField, IntensityImage, propagate, reconstruct, record_hologram
from .pipeline import ExperimentConfig, FERReport

__all__ = [
    "datapage",
    "nn",
    "optics",
    "pipeline",
    "ChannelConfig",
    "DataPage",
    "Fragment",
    "PageGeometry",
    "ComplexField",
    "IntensityImage",
    "propagate",
    "record_hologram",
    "reconstruct",
    "ExperimentConfig",
    "FERReport",
]

__version__ = "0.1.0"
