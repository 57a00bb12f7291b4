from dataclasses import dataclass


@dataclass(frozen=True)
class Settings:
    # tensor entry comparison
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    # frame certificates
    certificate_tol: float = 1e-9
    # scalar Weyl invariants in floating mode
    weyl_tol: float = 1e-10
    # alpha via Theta against alpha_direct
    alpha_rel_tol: float = 1e-8
    # alpha comparison in the isometry decision
    isometry_rel_tol: float = 1e-9
    # alpha^2 constancy, scaled by max(1, |mean|)
    constancy_tol: float = 1e-9
    quadrature_abs_tol: float = 1e-12
    quadrature_rel_tol: float = 1e-12
    # constructed isometries: phi^* g = g on finite-difference Jacobians
    isometry_check_tol: float = 1e-6
    jacobian_step: float = 1e-5
    oracle_k_max: int = 4
    weyl_slot_cap: int = 12
    alpha_k_max: int = 12
    grid: str = "-2:2:17"
    default_p: int = 1
    max_p: int = 3
    seed: int = 0


DEFAULT_SETTINGS = Settings()
