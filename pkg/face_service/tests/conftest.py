import io

import pytest
from fastapi.testclient import TestClient
from PIL import Image

from face_service.app import create_app
from face_service.model import FaceModel


@pytest.fixture(scope="session")
def model():
    return FaceModel()


@pytest.fixture(scope="session")
def client(model):
    return TestClient(create_app(model))


def png_bytes(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture(scope="session")
def portrait_bytes():
    from face_service.synthetic import FIXTURE_PERSONS, FIXTURE_VARIANTS, render

    return png_bytes(Image.fromarray(render(FIXTURE_PERSONS["ada"], FIXTURE_VARIANTS[0])))


@pytest.fixture(scope="session")
def solid_bytes():
    return png_bytes(Image.new("L", (200, 200), 120))
