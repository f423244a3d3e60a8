"""Python bindings for the dagem C++ core."""

from ._core import (
    ConfigError,
    DataError,
    DagSpec,
    NumericalError,
    SemParams,
    adapt,
    conditional_law,
    fit_dag_source,
    implied_covariance,
    impute,
    kiiveri_adapt,
    louis_check,
    make_dag,
    metrics,
    run_experiment,
    sample,
    seven_node_example,
    split_target,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DagSpec",
    "NumericalError",
    "SemParams",
    "adapt",
    "conditional_law",
    "fit_dag_source",
    "implied_covariance",
    "impute",
    "kiiveri_adapt",
    "louis_check",
    "make_dag",
    "metrics",
    "run_experiment",
    "sample",
    "seven_node_example",
    "split_target",
]
