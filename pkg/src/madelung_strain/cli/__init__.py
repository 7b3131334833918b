"""Command-line front end: ``run``, ``verify`` and ``export``."""

from .config import Scenario, ScenarioError, load_scenario, parse_scenario

__all__ = ["Scenario", "ScenarioError", "load_scenario", "parse_scenario"]
