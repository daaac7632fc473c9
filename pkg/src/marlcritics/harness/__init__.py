from .curves import AggregateCurve, SchemaError, aggregate, aggregate_series
from .experiment import ExperimentSpec, OutputExistsError, SpecError, expand_grid, run_experiment, run_seed, run_sweep
from .report import exact_report, write_report
from .svgplot import plot, render_svg
