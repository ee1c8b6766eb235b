import numpy as np
import pytest

from facegroup.core import Album, FaceItem


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def make_item(item_id, direction, quality=0.9, label=None):
    return FaceItem(item_id=item_id, embedding=unit(direction), quality=quality, label=label)


@pytest.fixture
def tiny_album():
    """Three items: two aligned, one orthogonal."""
    return Album(
        album_id="tiny",
        items=(
            make_item("a", [1.0, 0.0, 0.0], quality=0.9, label="p1"),
            make_item("b", [1.0, 0.02, 0.0], quality=0.8, label="p1"),
            make_item("c", [0.0, 1.0, 0.0], quality=0.7, label="p2"),
        ),
    )
