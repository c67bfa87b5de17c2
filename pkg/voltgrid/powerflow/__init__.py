"""
Power flow models for radial feeders.
"""
from voltgrid.powerflow.flow_state import FlowState
from voltgrid.powerflow.lindistflow import (
    Sensitivity,
    build_sensitivity,
    dense_lindistflow,
    lindistflow_residuals,
    solve_lindistflow,
)
from voltgrid.powerflow.branch_flow import branch_flow_residuals, solve_branch_flow_exact
from voltgrid.powerflow.exactness import ExactnessReport, certify_soc_exactness
