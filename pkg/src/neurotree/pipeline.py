"""Subject-level glue between the trained model, node scoring and the brain tree."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .age_gcn import GcnModel, SubjectFeatures, make_batch, predict
from .brain_tree import (PathWeightConfig, PrunedTree, TrunkHierarchy, extract_trunks,
                         graph_from_fc, kruskal)
from .cmfc_loss import FcStrength, project
from .node_scoring import NodeScores, node_scores

DEFAULT_QUANTILE = 0.5


@dataclass
class SubjectTree:
    subject_id: str
    label: int
    tree: PrunedTree
    scores: NodeScores
    hierarchy: TrunkHierarchy


def subject_scores(model: GcnModel, feats: list[SubjectFeatures], step: float = 1.0) -> list[NodeScores]:
    """Node scores from segment-averaged strengths and the final embedding."""
    if not feats:
        return []
    _, _, z = predict(model, make_batch(feats), step)
    out = []
    for f, zi in zip(feats, z):
        latent = project(f.strength.mean(axis=0), model.proj)
        out.append(node_scores(latent, zi))
    return out


def subject_tree(f: SubjectFeatures, scores: NodeScores, cfg: PathWeightConfig,
                 l_max: int = 3, quantile: float = DEFAULT_QUANTILE) -> SubjectTree:
    c = f.strength.mean(axis=0)
    strength = FcStrength(c, float(c.mean()))
    g = graph_from_fc(strength, np.abs(f.a_dyn).mean(axis=0), quantile)
    tree = kruskal(g)
    return SubjectTree(f.subject_id, f.label, tree, scores, extract_trunks(tree, scores, cfg, l_max))
