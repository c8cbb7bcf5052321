import numpy as np
import pytest

from panokit import (
    DEFAULT_TAXONOMY,
    CategorySpec,
    MaskStack,
    PanopticMap,
    QueryProvenance,
    Segment,
)


def make_stack(masks, cats_or_prov, probs=None, taxonomy=DEFAULT_TAXONOMY):
    """Build a MaskStack from per-mask arrays.

    cats_or_prov: per-mask category ids (things get that prob at their column,
    stuff entries carry fixed_category) or explicit QueryProvenance objects.
    probs: per-mask probability placed on the chosen category column.
    """
    masks = np.asarray(masks, np.float32)
    n = masks.shape[0]
    columns = {c.id: pos for pos, c in enumerate(taxonomy)}
    things = {c.id for c in taxonomy if c.is_thing}
    if probs is None:
        probs = [1.0] * n
    class_probs = np.zeros((n, len(taxonomy)), np.float32)
    provenance = []
    for i, entry in enumerate(cats_or_prov):
        if isinstance(entry, QueryProvenance):
            provenance.append(entry)
            cat = entry.fixed_category
            if cat is None:
                cat = next(iter(things))
        else:
            cat = int(entry)
            if cat in things:
                provenance.append(QueryProvenance(i, True))
            else:
                provenance.append(QueryProvenance(i, False, cat))
        class_probs[i, columns[cat]] = probs[i]
    return MaskStack(masks, class_probs, tuple(provenance))


def make_map(sem, ids, taxonomy=DEFAULT_TAXONOMY, sources=None):
    """Build a PanopticMap, deriving the segment list from the id raster."""
    sem = np.asarray(sem, np.int32)
    ids = np.asarray(ids, np.int32)
    segments = []
    for sid in np.unique(ids):
        if sid == 0:
            continue
        cats = np.unique(sem[ids == sid])
        assert len(cats) == 1
        source = None if sources is None else sources.get(int(sid))
        segments.append(Segment(int(sid), int(cats[0]), source_query=source))
    return PanopticMap(sem, ids, tuple(segments))


@pytest.fixture
def tiny_taxonomy():
    return (
        CategorySpec(1, "box", True),
        CategorySpec(2, "disc", True),
        CategorySpec(6, "sky", False),
    )
