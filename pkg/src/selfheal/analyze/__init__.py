"""Anomaly detection and fault diagnosis."""
from .analyzer import NORMAL, Analyzer, DetectorModels, Diagnosis, rule_signatures
from .confusion import ConfusionCounts, DetectionScorer, rescore
from .dtree import DecisionTreeModel, classify, fit_dtree
from .iforest import IsolationForestModel, fit_iforest, iforest_score
from .kmeans import KMeansResult, cluster_purity, fit_kmeans

__all__ = [
    "NORMAL", "Analyzer", "DetectorModels", "Diagnosis", "rule_signatures",
    "ConfusionCounts", "DetectionScorer", "rescore",
    "DecisionTreeModel", "classify", "fit_dtree",
    "IsolationForestModel", "fit_iforest", "iforest_score",
    "KMeansResult", "cluster_purity", "fit_kmeans",
]
