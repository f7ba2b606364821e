"""Weakly supervised salient object detection.

Trains a joint existence/saliency model from image-level labels only:
hidden per-superpixel saliency labels live inside a latent max-margin
objective whose inference is an exact graph cut.
"""

from .config import Config
from .diffusion import SaliencyMap, diffuse, render
from .estimator import (Chi2KernelMap, LatentSaliencyClassifier,
                        LinearExistenceSVM, SaliencyFeatureExtractor)
from .features import ImageFeatures, chi2_map, extract_features
from .imaging import load_image, slic_superpixels
from .learn import TrainConfig, TrainTrace, train, train_linear_svm
from .metrics import accuracy, average_precision, mae, pr_curve
from .model import ModelParams, infer, infer_h
from .persist import load_manifest, load_model, save_model
from .synth import synth_dataset

__all__ = [
    "Chi2KernelMap", "Config", "ImageFeatures", "LatentSaliencyClassifier",
    "LinearExistenceSVM", "ModelParams", "SaliencyFeatureExtractor",
    "SaliencyMap", "TrainConfig", "TrainTrace", "accuracy",
    "average_precision", "chi2_map", "diffuse", "extract_features", "infer",
    "infer_h", "load_image", "load_manifest", "load_model", "mae", "pr_curve",
    "render", "save_model", "slic_superpixels", "synth_dataset", "train",
    "train_linear_svm",
]

__version__ = "0.1.0"
