"""desksim: desk-scale real-to-sim engine.

Hybrid splat/mesh rendering, marker+ICP scene alignment, kinematic robot
simulation with RRT-Connect planning, and rejection-sampled demonstration
generation.
"""

from .alignment import (AlignmentResult, CorrespondenceSet, IcpError,
                        IcpParams, align_scene, estimate_pose_kabsch,
                        icp_point_to_plane, load_correspondences,
                        save_correspondences)
from .bvh import Bvh, build_bvh, capsule_intersects_mesh, distance_point_mesh
from .camera import CameraView, look_at
from .mesh import TriangleMesh, load_mesh, save_mesh
from .meshproc import fill_holes, simplify_mesh, smooth_mesh
from .planning import (Path, PlannerParams, config_in_collision,
                       motion_validity, rrt_connect, shortcut_path,
                       time_parameterize)
from .pointcloud import (DepthImage, PointCloud, depth_to_pointcloud,
                         estimate_normals, load_depth,
                         sample_points_on_mesh, save_depth)
from .pose import Pose, pose_compose
from .render import (RenderBuffers, composite, project_gaussian,
                     rasterize_mesh, render_gaussians, render_scene)
from .robot import (Capsule, IkError, Joint, JointConfig, KinematicChain,
                    default_arm, forward_kinematics, ik_damped_least_squares,
                    jacobian, load_chain)
from .scene import RigidObject, Scene, load_scene, save_scene
from .splats import GaussianCloud, GaussianPrimitive, load_gaussian_cloud, save_gaussian_cloud

__version__ = "0.1.0"

__all__ = [
    "AlignmentResult",
    "Bvh",
    "CameraView",
    "Capsule",
    "CorrespondenceSet",
    "DepthImage",
    "GaussianCloud",
    "GaussianPrimitive",
    "IcpError",
    "IcpParams",
    "IkError",
    "Joint",
    "JointConfig",
    "KinematicChain",
    "Path",
    "PlannerParams",
    "PointCloud",
    "Pose",
    "RenderBuffers",
    "RigidObject",
    "Scene",
    "TriangleMesh",
    "align_scene",
    "build_bvh",
    "capsule_intersects_mesh",
    "composite",
    "config_in_collision",
    "default_arm",
    "depth_to_pointcloud",
    "distance_point_mesh",
    "estimate_normals",
    "estimate_pose_kabsch",
    "fill_holes",
    "forward_kinematics",
    "icp_point_to_plane",
    "ik_damped_least_squares",
    "jacobian",
    "load_chain",
    "load_correspondences",
    "load_depth",
    "load_gaussian_cloud",
    "load_mesh",
    "load_scene",
    "look_at",
    "motion_validity",
    "pose_compose",
    "project_gaussian",
    "rasterize_mesh",
    "render_gaussians",
    "render_scene",
    "rrt_connect",
    "sample_points_on_mesh",
    "save_correspondences",
    "save_depth",
    "save_gaussian_cloud",
    "save_mesh",
    "save_scene",
    "shortcut_path",
    "simplify_mesh",
    "smooth_mesh",
    "time_parameterize",
    "__version__",
]
