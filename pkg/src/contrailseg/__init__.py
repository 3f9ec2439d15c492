"""Contrail segmentation toolkit: annotation masks, false-color composites,
region losses with analytic gradients, IoU evaluation and a numpy micro UNet."""

from .annotations import Polygon, SceneRecord, Waypoint, parse_scene_records, serialize_scene_records
from .composite import BandStack, ChannelRanges, false_color, load_bandstack, save_bandstack
from .config import RunConfig
from .harness import augment_pair, evaluate, render_overlay, split_dataset, train
from .losses import (
    LossParams,
    LossResult,
    combined_loss,
    dice_loss,
    finite_difference_gradient,
    focal_loss,
    focal_tversky_loss,
    jaccard_loss,
    tversky_loss,
)
from .metrics import EvalReport, binarize, evaluate_dataset, iou
from .nn import AdamState, NetConfig, UNet, adam_step, backward, forward, init_params, load_checkpoint, save_checkpoint
from .raster import rasterize_polygon, render_ground_truth, resize_image, resize_mask
from .synth import SynthParams, generate_dataset, generate_scene

__version__ = "0.1.0"
