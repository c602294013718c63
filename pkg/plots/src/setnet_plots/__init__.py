"""Chart rendering for activation/sparsity sweep CSVs."""

from .charts import SCHEMAS, ChartSpec, SchemaError, read_rows, render

__version__ = "0.1.0"
