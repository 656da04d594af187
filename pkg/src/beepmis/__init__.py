"""Self-stabilizing maximal independent sets in the synchronous beeping model."""
from .errors import BeepMISError, ConfigError, GraphError, ProtocolError, TraceError
from .graph import (
    Family,
    Graph,
    GraphFamilySpec,
    build_graph,
    generate,
    max_degree,
    two_hop_max_degree,
)
from .protocol import (
    InitMode,
    LevelState,
    LmaxPolicy,
    PolicyKind,
    ProtocolConfig,
    Variant,
    VertexRoundInput,
    assign_lmax,
    beep_probability,
    initial_levels,
    update_level_v1,
    update_level_v2,
)

__version__ = "0.1.0"
