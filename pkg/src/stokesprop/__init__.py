"""Resistance tensors of rigid bodies in Stokes flow and the net motion
they acquire under a weak time-periodic force."""

__version__ = "0.1.0"

from .bem import ResistanceSet, compute_resistance, transport_tensors  # noqa: E402
from .dynamics import BodyState, Orbit, delta_sweep, integrate_periodic  # noqa: E402
from .dynamics import integrate_translation_only, net_distance  # noqa: E402
from .mesh import TriMesh, ellipsoid, icosphere, load_stl  # noqa: E402
from .propulsion import BodyInertia, Forcing, evaluate_propulsion  # noqa: E402

__all__ = [
    "BodyInertia", "BodyState", "Forcing", "Orbit", "ResistanceSet", "TriMesh",
    "compute_resistance", "delta_sweep", "ellipsoid", "evaluate_propulsion", "icosphere",
    "integrate_periodic", "integrate_translation_only", "load_stl", "net_distance",
    "transport_tensors",
]
