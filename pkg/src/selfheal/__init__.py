"""Simulated self-healing web application with a MAPE-K control loop."""
from .chaos import Chaos, FaultType, catalog
from .config import ExperimentConfig, load_config
from .engine import Simulation
from .execute import Mode
from .monitor import Monitor
from .plan import KnowledgeBase
from .webapp import WebApp, WorkloadConfig

__version__ = "0.1.0"

__all__ = [
    "Chaos", "FaultType", "catalog", "ExperimentConfig", "load_config", "Simulation", "Mode",
    "Monitor", "KnowledgeBase", "WebApp", "WorkloadConfig", "__version__",
]
