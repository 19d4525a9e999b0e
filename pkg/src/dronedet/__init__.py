"""Small-object (drone) detection with a three-scale Tiny-YOLOv3."""

from .boxes import iou, nms
from .cfg import NetworkDef, infer_shapes, parse_cfg, render_cfg
from .dataset import GroundTruthLabel, load_image, parse_label_file, resize_to_net, split_dataset
from .head import Detection, YoloScale, decode, encode_ground_truth, output_shape
from .metrics import EvalReport, compute_ap, evaluate, match_detections, precision_recall_f1, render_report
from .network import DEFAULT_ANCHORS, BuiltNetwork, build_baseline_tiny, build_custom_tiny, forward
from .pipeline import detect
from .weights import load_weights, save_weights

__version__ = "0.1.0"
