"""
Fast-timescale inverter setpoint solvers.
"""
from voltgrid.convexopt.problem import (
    QpProblem,
    SlotData,
    SolveReport,
    STATUS_INFEASIBLE,
    STATUS_MAX_ITER,
    STATUS_OPTIMAL,
    STATUS_STALLED,
    active_inverters,
    assemble_qp,
    capacitor_injection,
    evaluate_setpoints,
    qp_from_affine_map,
    setpoints_per_bus,
    slot_injections,
)
from voltgrid.convexopt.box_qp import kkt_residual, solve_box_qp
from voltgrid.convexopt.socp import ConeProgram, build_cone_program, project_rotated_cones, solve_socp
from voltgrid.convexopt.realtime import enumerate_capacitor_actions, round_commitment, solve_realtime_relaxed
