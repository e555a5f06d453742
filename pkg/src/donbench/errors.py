"""Exception hierarchy shared by all donbench modules."""


class DonbenchError(Exception):
    """Base class for all errors raised by this package."""


class GenerationError(DonbenchError):
    """Random-field or profile synthesis failed (ill-conditioned spec)."""


class SolverError(DonbenchError):
    """A FEM solve failed (singular system, nonlinear non-convergence, blow-up)."""


class GraphError(DonbenchError):
    """Shape or structure error while building/running a computation graph."""


class SpecError(DonbenchError):
    """Inconsistent architecture specification."""


class InputError(DonbenchError):
    """Model inputs incompatible with the architecture (sensor/sequence mismatch)."""


class TrainingError(DonbenchError):
    """Training diverged or was misconfigured."""


class ConstitutiveError(DonbenchError):
    """Implicit constitutive solve could not bracket a root."""


class HarnessError(DonbenchError):
    """Benchmark orchestration error (mismatched artifacts, corrupt containers)."""


class DegenerateTargetError(DonbenchError):
    """Relative error undefined because the reference vector has zero norm."""
