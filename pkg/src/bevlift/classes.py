"""Semantic class ids shared by renders, BEV maps and objects."""

BACKGROUND = 0
ROAD = 1
VEHICLE = 2
PEDESTRIAN = 3
CYCLIST = 4
TRAFFIC_SIGN = 5

NUM_CLASSES = 6
NAMES = ("background", "road", "vehicle", "pedestrian", "cyclist", "traffic-sign")
OBJECT_CLASSES = (VEHICLE, PEDESTRIAN, CYCLIST, TRAFFIC_SIGN)

# (length, width) in meters
DEFAULT_FOOTPRINTS = {
    VEHICLE: (4.5, 2.0),
    PEDESTRIAN: (0.6, 0.6),
    CYCLIST: (1.8, 0.6),
    TRAFFIC_SIGN: (0.4, 0.4),
}
DEFAULT_HEIGHTS = {VEHICLE: 1.6, PEDESTRIAN: 1.75, CYCLIST: 1.7, TRAFFIC_SIGN: 2.5}


def name_of(class_id: int) -> str:
    return NAMES[class_id] if 0 <= class_id < len(NAMES) else f"class-{class_id}"
