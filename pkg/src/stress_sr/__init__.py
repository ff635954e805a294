"""Self-supervised super-resolution for interleaved dynamic volume series."""

from .acquisition import Frame, ScanProtocol, acquire, frame_index, simulate_second_stage, slice_subsets
from .metrics import pck, psnr, ssim
from .models import BDNConfig, ModelBundle, SRConfig
from .motion import KeypointSet, MotionStats, Pose, RigidTransform, Trajectory, pose_from_keypoints, synthesize_trajectory
from .phantom import PhantomSpec, generate_phantom
from .pipeline import StressConfig, run_inference, run_training
from .volume import Volume, add_rician_noise, foreground_mask, interpolate_frame, resample_affine, transpose_xz

__version__ = "0.1.0"
