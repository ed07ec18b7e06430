import pytest
from scenereg.geometry import primitives


@pytest.fixture
def cube():
    """20 mm cube centered at the origin"""
    return primitives.box([20.0, 20.0, 20.0])


@pytest.fixture
def sphere():
    return primitives.uv_sphere(10.0, segments=32, rings=16)


@pytest.fixture
def slab():
    """Thin 100 x 100 x 10 mm support whose top face lies on z=0"""
    return primitives.box([100.0, 100.0, 10.0], center=[0.0, 0.0, -5.0])


@pytest.fixture
def asymmetric():
    """Object without rotational symmetry for pose recovery"""
    from scenereg.geometry.mesh import TriangleMesh

    return TriangleMesh.concatenate(
        [
            primitives.box([30.0, 16.0, 8.0]),
            primitives.box([8.0, 8.0, 14.0], center=[11.0, 4.0, 11.0]),
        ]
    )
