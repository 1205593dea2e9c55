"""Surface-EMG articulation decoding on the SPD-matrix manifold."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    DegenerateInput,
    FormatError,
    InvalidDiagonal,
    InvalidInput,
    NotPositiveDefinite,
    OdeDiverged,
    RankDeficient,
    SpdEmgError,
    TrainingDiverged,
    UnsupportedVersion,
    WindowTooLong,
)
from .geometry import (  # noqa: F401
    CholeskyPoint,
    SplitPair,
    chart_exp,
    chart_log,
    combine,
    frechet_mean,
    from_cholesky,
    geodesic_distance,
    group_op,
    split,
    to_cholesky,
)
from .signal_graph import (  # noqa: F401
    Recording,
    TrialSpec,
    WindowSpec,
    edge_matrix,
    extract_windows,
    regularize,
)
