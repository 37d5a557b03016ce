from .dynamics import (
    BRUTE_FORCE_MAX_N,
    CollisionEvent,
    EventLog,
    advance,
    apply_scattering,
    brute_force_advance,
    choose_cells,
    predict_pair_collision,
    reverse_velocities,
    trajectory,
)

__all__ = [
    "BRUTE_FORCE_MAX_N",
    "CollisionEvent",
    "EventLog",
    "advance",
    "apply_scattering",
    "brute_force_advance",
    "choose_cells",
    "predict_pair_collision",
    "reverse_velocities",
    "trajectory",
]
