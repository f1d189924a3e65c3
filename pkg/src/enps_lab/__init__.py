"""Lane-keeping controllers as numerical P systems: interpreter,
model format, closed-loop simulator and evolutionary road generation."""

from importlib import resources

from .engine import PSystem, Membrane, Program, StepTrace, run, step
from .model import (
    ControllerParams,
    build_m1,
    build_m2,
    parse_model,
    parse_params,
    serialize_model,
)
from .sim import RoadGeometry, RobotParams, SimResult, build_road, road_from_json, simulate
from .roadgen import GAConfig, RoadGenome, TestCase, decode, export_tests, nsga2

__version__ = "0.1.0"


def default_params(model: str) -> ControllerParams:
    """Shipped tuned constants for controller 'm1' or 'm2'."""
    if model not in ("m1", "m2"):
        raise ValueError("model must be 'm1' or 'm2'")
    text = resources.files("enps_lab.data").joinpath(f"{model}.params").read_text()
    return parse_params(text)


def build_controller(model: str, params: ControllerParams | None = None) -> PSystem:
    """Construct controller 'm1' or 'm2' with defaults or given params."""
    if model not in ("m1", "m2"):
        raise ValueError("model must be 'm1' or 'm2'")
    if params is None:
        params = default_params(model)
    return build_m1(params) if model == "m1" else build_m2(params)
