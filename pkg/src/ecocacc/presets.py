"""Reference parameter sets used by the shipped scenarios and the acceptance suite."""

from ecocacc.controllers import Q1, Q2, PdGains
from ecocacc.plant import SpacingPolicy, VehicleParams
from ecocacc.stability import StabilityCase

# Result of search_gains over K_p in [0.1, 2], K_d in [0, 1] (step 0.05) for case 1.
# No pair in that box reaches a CACC norm <= 1 for case 1; this is the minimiser.
DEFAULT_GAINS = PdGains(K_p=0.1, K_d=1.0)

CACC_T_GAP = 0.6
ECO_T_GAP = 1.0
ACC_T_GAP = 0.6
STANDSTILL_DISTANCE = 10.0
V2V_DELAY = 0.3

REFERENCE_VEHICLES = {
    1: VehicleParams(K_v=1.0, tau=0.5, kappa=0.1),
    2: VehicleParams(K_v=1.0, tau=0.5, kappa=0.0),
    3: VehicleParams(K_v=1.0, tau=0.5, kappa=0.0),
}
REFERENCE_T_GAPS = {1: 0.6, 2: 0.6, 3: 1.0}


def reference_case(case: int, q=Q1, gains: PdGains = DEFAULT_GAINS) -> StabilityCase:
    if case not in REFERENCE_VEHICLES:
        raise ValueError(f"reference cases are 1-3, got {case}")
    return StabilityCase(
        vehicle=REFERENCE_VEHICLES[case],
        policy=SpacingPolicy(d_st=0.0, t_gap=REFERENCE_T_GAPS[case]),
        gains=gains,
        beta=V2V_DELAY,
        q=q,
    )


__all__ = [
    "ACC_T_GAP",
    "CACC_T_GAP",
    "DEFAULT_GAINS",
    "ECO_T_GAP",
    "Q1",
    "Q2",
    "STANDSTILL_DISTANCE",
    "REFERENCE_T_GAPS",
    "REFERENCE_VEHICLES",
    "V2V_DELAY",
    "reference_case",
]
