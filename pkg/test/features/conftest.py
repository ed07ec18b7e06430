import math

import pytest


def run(args):
    """Invoke the scenereg command tree and return the click result"""
    from click.testing import CliRunner
    from scenereg.cli.app import build_app

    return CliRunner().invoke(build_app().app, [str(arg) for arg in args])


@pytest.fixture
def cli():
    return run


@pytest.fixture
def true_pose():
    from scenereg.pose import RigidTransform, quat_from_rotvec

    return RigidTransform(quat_from_rotvec([0.2, -0.1, 0.4]), [15.0, -10.0, 30.0])


@pytest.fixture
def scene_dir(tmp_path, asymmetric, cube, slab, true_pose):
    """
    One object on a slab, its scan, a top camera and a coarse init pose;
    plus ``stacked.json`` with two stacked cubes and no scan
    """
    from scenereg.geometry import Camera, TriangleMesh, look_at, save_mesh
    from scenereg.manifest import CameraModel, ObjectEntry, SceneManifest
    from scenereg.pose import PoseModel, RigidTransform, quat_from_rotvec

    directory = tmp_path / "scene"
    (directory / "meshes").mkdir(parents=True)
    save_mesh(asymmetric, directory / "meshes" / "part.obj")
    save_mesh(cube, directory / "meshes" / "cube.obj")
    save_mesh(TriangleMesh.concatenate([asymmetric.transformed(true_pose), slab]), directory / "scan.obj")

    kick = RigidTransform(quat_from_rotvec([0.0, math.radians(3.0), 0.0]), [1.5, -1.0, 1.0])
    camera = Camera.from_fov(32, 24, 60.0, look_at([16.0, -9.0, 150.0], [15.0, -10.0, 30.0], up=(0.0, 1.0, 0.0)))
    SceneManifest(
        scan="scan.obj",
        objects=[
            ObjectEntry(
                id="part",
                mesh="meshes/part.obj",
                pose=PoseModel.from_transform(true_pose),
                init_pose=PoseModel.from_transform(kick.compose(true_pose)),
            )
        ],
        cameras=[CameraModel.from_camera(camera)],
    ).save(directory / "manifest.json")

    SceneManifest(
        objects=[
            ObjectEntry(id="lower", mesh="meshes/cube.obj", pose=PoseModel(t=[0.0, 0.0, 10.0])),
            ObjectEntry(id="upper", mesh="meshes/cube.obj", pose=PoseModel(t=[0.0, 0.0, 30.0])),
        ]
    ).save(directory / "stacked.json")
    return directory
