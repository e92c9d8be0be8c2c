"""AM-PIIFD feature-based registration of multimodal images."""
from .config import PipelineConfig, build_config, parse_config
from .descriptor import DescriptorParams, describe
from .detector import DetectorParams, KeyPoint, detect
from .errors import (AmpiifdError, ConfigError, DegenerateError, ImageIOError, NoModelError,
                     StageError, UndescribableError)
from .evaluation import GroundTruth, RegistrationReport, cmr, rmse
from .image import load_image, save_image
from .kernels import BACKEND
from .matching import MatchParams, bilateral_match, orientation_filter, ransac
from .pipeline import register_images, run_register
from .scale_space import ScaleSpaceParams, build_scale_space
from .transform import TransformModel, estimate, warp_image

__version__ = "0.1.0"
