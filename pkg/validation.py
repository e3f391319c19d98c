"""
Disk Validation Suite
=====================
Runs the mesh solvers on a disk obstacle against the Mie series and the
operator identities, logging every comparison as a measured value next to
its tolerance.
"""

from typing import Optional

import numpy as np

from boundary_operators import build_operators, calderon_residuals
from config import LabSettings, RunConfig, build_incident, build_mesh
from errors import ConfigError
from fem import cached_dtn
from mesh import TransmissionMesh
from mie import (
    boundary_residuals,
    disk_single_layer_eigenvalue,
    mie_coefficients,
    mie_evaluate,
    mie_far_field,
    optical_theorem_residual as mie_optical_residual,
    scattering_cross_section,
)
from models import BoundaryConditionKind, FarFieldRoute, ValidationCheck, ValidationSummary
from runlog import get_logger
from scattering import (
    ImpedanceSpec,
    far_field,
    far_field_power,
    optical_theorem_residual,
    scattered_field,
)
from trace_space import boundary_mass_matrix

MIE_RESIDUAL_TOLERANCE = 1e-12
MIE_OPTICAL_TOLERANCE = 1e-10
DTN_SIGN_TOLERANCE = 1e-12


def relative_l2(values: np.ndarray, reference: np.ndarray) -> float:
    return float(np.linalg.norm(values - reference) / np.linalg.norm(reference))


class ValidationSuite:
    """Mie and operator checks for one disk configuration"""

    def __init__(self, cfg: RunConfig, settings: Optional[LabSettings] = None, mesh: Optional[TransmissionMesh] = None):
        if cfg.geometry.base != "disk" or cfg.geometry.level != 0:
            raise ConfigError("validation compares against the Mie series and needs a level-0 disk geometry")
        self.cfg = cfg
        self.settings = settings or LabSettings()
        self.logger = get_logger("validate")
        self.checks = []

        self.k = cfg.physics.k
        self.radius = cfg.geometry.radius
        self.incident = build_incident(cfg)
        self.mesh = mesh if mesh is not None else build_mesh(cfg, settings=self.settings)
        self.dtn = cached_dtn(self.mesh, self.k, cfg.discretisation.mode_cutoff)
        self.n_angles = cfg.discretisation.n_angles
        self.tolerances = cfg.validation
        self.condition_limit = self.settings.condition_limit

    def check(self, name: str, measured: float, tolerance: float, passed: Optional[bool] = None) -> ValidationCheck:
        """Record one comparison; passes when measured <= tolerance unless told otherwise"""
        if passed is None:
            passed = bool(measured <= tolerance)
        result = ValidationCheck(name=name, measured=float(measured), tolerance=float(tolerance), passed=passed)
        self.checks.append(result)
        self.logger.log(str(result), "SUCCESS" if passed else "ERROR")
        return result

    def _mie(self, bc, impedance: complex = 0.0):
        return mie_coefficients(
            bc,
            self.radius,
            self.k,
            impedance=impedance,
            angle=self.incident.angle,
            pairing=self.tolerances.robin_pairing,
        )

    def _dirichlet_far_field_error(self, mesh: TransmissionMesh) -> float:
        dtn = cached_dtn(mesh, self.k, self.cfg.discretisation.mode_cutoff)
        us = scattered_field(self.incident, BoundaryConditionKind.DIRICHLET, mesh, dtn=dtn)
        ff = far_field(us, self.k, self.n_angles, dtn=dtn, condition_limit=self.condition_limit)
        oracle = mie_far_field(self._mie(BoundaryConditionKind.DIRICHLET), self.n_angles)
        return relative_l2(ff.values, oracle.values)

    # ORACLE

    def check_oracle(self):
        self.logger.log("Mie oracle self-certification", "TEST")
        robin = self.tolerances.robin_impedance.value
        for bc, impedance in (
            (BoundaryConditionKind.DIRICHLET, 0.0),
            (BoundaryConditionKind.NEUMANN, 0.0),
            (BoundaryConditionKind.ROBIN, robin),
        ):
            sol = self._mie(bc, impedance)
            self.check(f"mie {bc.value} boundary residual", boundary_residuals(sol), MIE_RESIDUAL_TOLERANCE)
        for bc in (BoundaryConditionKind.DIRICHLET, BoundaryConditionKind.NEUMANN):
            self.check(f"mie {bc.value} optical theorem", mie_optical_residual(self._mie(bc)), MIE_OPTICAL_TOLERANCE)

    # SCATTERING

    def check_dirichlet(self):
        self.logger.log("Dirichlet scattering vs Mie", "TEST")
        tol = self.tolerances
        mesh = self.mesh
        oracle = self._mie(BoundaryConditionKind.DIRICHLET)
        us = scattered_field(self.incident, BoundaryConditionKind.DIRICHLET, mesh, dtn=self.dtn)

        ring_values = us.at_nodes(self.dtn.ring)
        ring_oracle = mie_evaluate(oracle, points=mesh.nodes[self.dtn.ring])
        self.check("dirichlet trace on the ball boundary", relative_l2(ring_values, ring_oracle), tol.trace_tolerance)

        oracle_ff = mie_far_field(oracle, self.n_angles)
        ff = far_field(us, self.k, self.n_angles, dtn=self.dtn, condition_limit=self.condition_limit)
        fine_error = relative_l2(ff.values, oracle_ff.values)
        self.check(f"dirichlet far field ({ff.route.value})", fine_error, tol.far_field_tolerance)

        full = [(0.0, 2.0 * np.pi)]
        sigma = scattering_cross_section(oracle)
        self.check(
            "dirichlet power vs cross-section",
            abs(far_field_power(ff, full) - sigma) / sigma,
            tol.power_tolerance,
        )
        self.check("dirichlet optical theorem", optical_theorem_residual(ff, self.incident), tol.power_tolerance)

        density = far_field(
            us, self.k, self.n_angles, route=FarFieldRoute.DENSITY, dtn=self.dtn, condition_limit=self.condition_limit
        )
        modes = far_field(us, self.k, self.n_angles, route=FarFieldRoute.DTN_MODES, dtn=self.dtn)
        self.check("far-field route agreement", density.relative_difference(modes), tol.far_field_tolerance)

        if tol.refinement_h is not None:
            coarse_mesh = build_mesh(self.cfg, h=tol.refinement_h, settings=self.settings)
            coarse_error = self._dirichlet_far_field_error(coarse_mesh)
            ratio = coarse_error / max(fine_error, 1e-300)
            self.check(
                f"dirichlet error ratio h={tol.refinement_h:g} / h={mesh.h:g}",
                ratio,
                tol.refinement_factor,
                passed=ratio >= tol.refinement_factor,
            )

    def check_neumann_robin(self):
        self.logger.log("Neumann and Robin scattering vs Mie", "TEST")
        tol = self.tolerances
        neumann = scattered_field(self.incident, BoundaryConditionKind.NEUMANN, self.mesh, dtn=self.dtn)
        neumann_ff = far_field(neumann, self.k, self.n_angles, dtn=self.dtn, condition_limit=self.condition_limit)
        oracle = mie_far_field(self._mie(BoundaryConditionKind.NEUMANN), self.n_angles)
        self.check("neumann far field", relative_l2(neumann_ff.values, oracle.values), tol.far_field_tolerance)

        impedance = tol.robin_impedance.value
        robin = scattered_field(
            self.incident, BoundaryConditionKind.ROBIN, self.mesh, L=ImpedanceSpec.constant(impedance), dtn=self.dtn
        )
        robin_ff = far_field(robin, self.k, self.n_angles, dtn=self.dtn, condition_limit=self.condition_limit)
        oracle = mie_far_field(self._mie(BoundaryConditionKind.ROBIN, impedance), self.n_angles)
        self.check(
            f"robin far field (lambda={impedance:g}, {tol.robin_pairing.value})",
            relative_l2(robin_ff.values, oracle.values),
            tol.far_field_tolerance,
        )

        zero = scattered_field(
            self.incident, BoundaryConditionKind.ROBIN, self.mesh, L=ImpedanceSpec.constant(0.0), dtn=self.dtn
        )
        zero_ff = far_field(zero, self.k, self.n_angles, dtn=self.dtn, condition_limit=self.condition_limit)
        difference = float(np.max(np.abs(zero_ff.values - neumann_ff.values)))
        self.check("robin lambda=0 equals neumann", difference, 0.0)

    # OPERATORS

    def check_operators(self):
        self.logger.log("boundary operators on the disk", "TEST")
        tol = self.tolerances
        mesh = self.mesh
        ops = build_operators(self.k, mesh, self.dtn)

        residuals = calderon_residuals(ops)
        self.check(
            "calderon relations (max residual)",
            residuals.max_residual if residuals.all_finite else float("inf"),
            tol.calderon_tolerance,
        )
        self.check(
            "calderon projector idempotency",
            max(residuals.projector_interior, residuals.projector_exterior),
            tol.calderon_tolerance,
        )

        if tol.spectrum_modes > 0:
            points = mesh.interface_points
            theta = np.arctan2(points[:, 1], points[:, 0])
            mass = boundary_mass_matrix(mesh)
            worst = 0.0
            for m in range(-tol.spectrum_modes, tol.spectrum_modes + 1):
                mode = np.exp(1j * m * theta)
                discrete = np.vdot(mode, ops.V @ (mass @ mode)) / np.vdot(mode, mode)
                exact = disk_single_layer_eigenvalue(m, self.k, self.radius)[0]
                worst = max(worst, abs(discrete - exact) / abs(exact))
            self.check(f"single-layer spectrum |m| <= {tol.spectrum_modes}", worst, tol.spectrum_tolerance)

    def check_dtn_sign(self):
        self.logger.log("DtN sign", "TEST")
        rng = np.random.default_rng(self.cfg.seed)
        n = len(self.dtn.ring)
        worst = -np.inf
        for _ in range(self.tolerances.n_random):
            v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            worst = max(worst, float(np.real(self.dtn.energy(v))) / float(np.vdot(v, v).real))
        self.check("dtn real part non-positive", worst, DTN_SIGN_TOLERANCE)

    def run(self) -> ValidationSummary:
        self.logger.log(
            f"validation on disk a={self.radius:g}, k={self.k:g}, R={self.mesh.ball_radius:g}, h={self.mesh.h:g}",
            "TEST",
        )
        self.check_oracle()
        self.check_dirichlet()
        self.check_neumann_robin()
        self.check_operators()
        self.check_dtn_sign()

        summary = ValidationSummary(checks=self.checks)
        n_failed = sum(not check.passed for check in self.checks)
        if summary.passed:
            self.logger.log(f"✅ VALIDATION PASSED ({len(self.checks)} checks)", "SUCCESS")
        else:
            self.logger.log(f"❌ VALIDATION FAILED ({n_failed} of {len(self.checks)} checks)", "ERROR")
        return summary
