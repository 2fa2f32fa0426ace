"""Knowledge-graph embeddings for resistance spot welding quality data.

Pipeline: :mod:`ingest` tables, discretise literals (:mod:`literals`),
convert to a graph (:mod:`kg`), train embeddings (:mod:`models`,
:mod:`training`), rank held-out tails (:mod:`evaluation`) and compare with
:mod:`baselines`.  :mod:`synth` generates data with planted structure.
"""

from .errors import DataError, NumericError, SchemaError, WeldKGEError

__version__ = "0.1.0"

__all__ = ["DataError", "NumericError", "SchemaError", "WeldKGEError", "__version__"]
