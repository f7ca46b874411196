"""Direct (position-domain) geolocation of GNSS interference emitters."""

from directgeo.geodesy import (
    CandidateGrid,
    GeodeticCoord,
    build_candidate_grid,
    ecef_to_lla,
    lla_to_ecef,
)
from directgeo.geoloc import (
    CorrelationGrid,
    EmitterEstimate,
    accumulate_grids,
    correlate_point,
    correlate_snapshot,
    detect_emitters,
    direct_geolocate,
    predict_geometry,
    predict_pair_offsets,
)
from directgeo.waveform import BasebandCapture

__version__ = "0.1.0"

__all__ = [
    "BasebandCapture",
    "CandidateGrid",
    "CorrelationGrid",
    "EmitterEstimate",
    "GeodeticCoord",
    "accumulate_grids",
    "build_candidate_grid",
    "correlate_point",
    "correlate_snapshot",
    "detect_emitters",
    "direct_geolocate",
    "ecef_to_lla",
    "lla_to_ecef",
    "predict_geometry",
    "predict_pair_offsets",
]
