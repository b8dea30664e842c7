"""Quadruped motion imitation toolkit.

Library layout:

* robot     - model description, analytic leg kinematics
* motion    - reference motion container, CSV format, gait synthesis
* sim       - centroidal rigid-body simulator with penalty ground contact
* qp        - dense active-set QP and the stance-force problem builder
* control   - gait FSM, stance/swing controllers, per-tick dispatcher
* dmp       - rhythmic movement primitives over motion channels
* reward    - imitation reward and episode evaluation
* optimize  - CMA-ES, swing-height optimization, motion stitching
* cli       - command line front end (synth/fit/rollout/optimize/compare/stitch)
"""

from .robot import (
    LEG_NAMES,
    N_LEGS,
    LegJoints,
    RobotModel,
    SchemaError,
    UnitError,
    body_to_world,
    default_model,
    forward_kinematics,
    foot_positions,
    inverse_kinematics,
    leg_jacobian,
    load_robot,
    world_to_body,
)

__version__ = "0.1.0"
