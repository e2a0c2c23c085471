from .layout import (
    CircuitLayout,
    Edge,
    Population,
    bcsk_layout,
    check_orthogonality,
    evaluate_backend,
    export_layout_dot,
    synthesize_layout,
)
from .logic import (
    ilf_backend,
    sop_backend,
    sop_from_table,
    thermometer_decode_table,
)
