"""Input validation helpers shared by the estimators."""
import numbers

from .circuit import Circuit
from .pauli import PauliString


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_depths(depths):
    depths = [int(d) for d in depths]
    if not depths:
        raise ValueError("at least one depth is required")
    for d in depths:
        if d < 2 or d % 2:
            raise ValueError(f"benchmark depths must be even and positive, got {d}")
    return sorted(set(depths))


def check_circuits(circuits):
    """Accept a circuit, a dict in the JSON schema, or a list of either."""
    if isinstance(circuits, (Circuit, dict)):
        circuits = [circuits]
    out = [c if isinstance(c, Circuit) else Circuit.from_dict(c) for c in circuits]
    if not out:
        raise ValueError("no circuits given")
    widths = {c.n_qubits for c in out}
    if len(widths) != 1:
        raise ValueError(f"circuits span different register sizes: {sorted(widths)}")
    return out


def check_observables(observables, n_qubits):
    if isinstance(observables, (str, PauliString)):
        observables = [observables]
    out = [PauliString.from_label(o) if isinstance(o, str) else o for o in observables]
    if not out:
        raise ValueError("no observables given")
    for o in out:
        if o.n_qubits != n_qubits:
            raise ValueError(f"observable {o} does not act on {n_qubits} qubits")
    return out


def check_noise_strengths(strengths):
    out = [float(s) for s in strengths]
    if not out:
        raise ValueError("at least one noise strength is required")
    if any(s < 0 for s in out):
        raise ValueError(f"noise strengths must be non-negative, got {out}")
    return out
