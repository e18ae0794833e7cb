"""Copyright (c) 2023, Aydin Abdi.

This module is responsible for grouping studies by equal reported variances.
"""

from collections import defaultdict
from typing import Dict, List  # noqa: F401

import numpy as np
from loguru import logger

from meta_risk_insights.data_classes import GroupedData, Study, StudySet
from meta_risk_insights.exceptions import InvalidInputError


class StudyGrouper:
    """Responsible for reducing a StudySet to its per-variance statistics."""

    def __init__(self, study_set: StudySet) -> None:
        """Responsible for reducing a StudySet to its per-variance statistics.

        Args:
            study_set: The studies to group.
        """
        self.study_set = study_set
        self.tolerance = study_set.grouping_tolerance

    def _same_variance(self, reference: float, variance: float) -> bool:
        return abs(variance - reference) <= self.tolerance * reference

    def _cluster_by_tolerance(self, studies: List[Study]) -> List[List[Study]]:
        """Cluster studies within tolerance of the first variance of the cluster."""
        clusters = []  # type: List[List[Study]]
        for study in sorted(studies, key=lambda item: item.variance):
            reference = clusters[-1][0].variance if clusters else None
            if reference is not None and self._same_variance(reference, study.variance):
                clusters[-1].append(study)
            else:
                clusters.append([study])
        return clusters

    def clusters(self) -> List[List[Study]]:
        """Return the studies of every group, ascending in variance.

        Studies carrying a group_id are grouped by label; the rest are grouped by
        tolerance. Groups whose variances end up within tolerance are merged.
        """
        labelled = defaultdict(list)  # type: Dict[str, List[Study]]
        unlabelled = []  # type: List[Study]
        for study in self.study_set.studies:
            if study.group_id:
                labelled[study.group_id].append(study)
            else:
                unlabelled.append(study)

        groups = list(labelled.values()) + self._cluster_by_tolerance(unlabelled)
        groups.sort(key=lambda members: float(np.mean([s.variance for s in members])))

        merged = []  # type: List[List[Study]]
        for members in groups:
            variance = float(np.mean([s.variance for s in members]))
            if merged:
                previous = float(np.mean([s.variance for s in merged[-1]]))
                if self._same_variance(previous, variance):
                    logger.debug(f"Merging variances {previous} and {variance}")
                    merged[-1].extend(members)
                    continue
            merged.append(list(members))
        return merged

    def group(self) -> GroupedData:
        """Group the studies.

        Returns:
            GroupedData with group means and unbiased within-group variances.
        """
        if self.study_set.n < 2:
            raise InvalidInputError(
                f"at least 2 studies are needed, got {self.study_set.n}"
            )
        variances, multiplicities, means, within = [], [], [], []
        for members in self.clusters():
            effects = np.array([study.effect for study in members])
            variances.append(float(np.mean([study.variance for study in members])))
            multiplicities.append(len(members))
            means.append(float(effects.mean()))
            within.append(float(effects.var(ddof=1)) if len(members) > 1 else 0.0)
        logger.debug(f"Grouped {self.study_set.n} studies into {len(variances)} groups")
        return GroupedData(
            group_variances=tuple(variances),
            multiplicities=tuple(multiplicities),
            group_means=tuple(means),
            within_variances=tuple(within),
        )


def group(study_set: StudySet) -> GroupedData:
    """Group ``study_set`` by equal reported variances."""
    return StudyGrouper(study_set).group()
