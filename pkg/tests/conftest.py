"""Shared fixtures: the packaged two-region rice / potato-salad scenario."""
import pytest

from graft_sampler.analytic import scene_for_bundle
from graft_sampler.config import conditions_from_config
from graft_sampler.prompts import ItemSpec, compile_prompts


@pytest.fixture(scope="session")
def bundle():
    return compile_prompts([ItemSpec("rice"), ItemSpec("potato salad")], "auto")


@pytest.fixture(scope="session")
def scene(bundle):
    return scene_for_bundle(bundle)


@pytest.fixture(scope="session")
def conditions(bundle, scene):
    return conditions_from_config(bundle, scene)
