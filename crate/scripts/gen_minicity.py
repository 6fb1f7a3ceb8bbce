#!/usr/bin/env python3
"""Regenerates the bundled `minicity` fixture (OSM extract, sensors, traffic, holidays).

The output is deterministic: rerunning this script reproduces the committed files
byte for byte.

    python3 scripts/gen_minicity.py crates/core/tests/fixtures/minicity
"""
import datetime as dt
import math
import os
import sys

CENTER_LAT = 40.4600
CENTER_LON = -3.6770
SPACING_M = 300.0
M_PER_DEG_LAT = 111195.0
M_PER_DEG_LON = M_PER_DEG_LAT * math.cos(math.radians(CENTER_LAT))


def grid_coord(x, y):
    """Grid (x, y) in spacing units, origin at the south-west corner of a 5x5 grid."""
    east = (x - 2) * SPACING_M
    north = (y - 2) * SPACING_M
    return CENTER_LAT + north / M_PER_DEG_LAT, CENTER_LON + east / M_PER_DEG_LON


def grid_id(x, y):
    return 1000 + 10 * x + y


def write_osm(path):
    nodes = {}
    for x in range(5):
        for y in range(5):
            nodes[grid_id(x, y)] = grid_coord(x, y)
    # shape points between grid nodes on the tertiary avenue (x = 2)
    for y in range(4):
        lat, lon = grid_coord(2.03, y + 0.5)
        nodes[2000 + y] = (lat, lon)
    # footway and building nodes
    nodes[3000] = grid_coord(0.5, 0.5)
    nodes[3001] = grid_coord(1.5, 1.5)
    nodes[3002] = grid_coord(3.4, 3.4)
    nodes[3003] = grid_coord(3.6, 3.4)
    nodes[3004] = grid_coord(3.6, 3.6)
    nodes[3005] = grid_coord(3.4, 3.6)

    def col(x, ys):
        return [grid_id(x, y) for y in ys]

    def row(y, xs):
        return [grid_id(x, y) for x in xs]

    tertiary = []
    for y in range(4):
        tertiary += [grid_id(2, y), 2000 + y]
    tertiary.append(grid_id(2, 4))

    ways = [
        (1, col(4, range(5)), {"highway": "motorway", "maxspeed": "90", "lanes": "3", "name": "M-30"}),
        (2, col(0, range(0, 3)), {"highway": "primary", "maxspeed": "50", "lanes": "2", "name": "Castellana S"}),
        (3, col(0, range(2, 5)), {"highway": "primary", "maxspeed": "50", "lanes": "2", "name": "Castellana N"}),
        (4, row(2, range(0, 3)), {"highway": "secondary", "lanes": "2", "name": "Avenida W"}),
        (5, row(2, range(2, 5)), {"highway": "secondary", "maxspeed": "30 mph", "lanes": "2", "name": "Avenida E"}),
        (6, tertiary, {"highway": "tertiary", "name": "Calle Central"}),
        (7, row(0, range(0, 4)), {"highway": "residential", "name": "Calle Sur"}),
        (8, row(1, range(0, 4)), {"highway": "residential", "oneway": "yes", "maxspeed": "20", "name": "Calle Uno"}),
        (9, row(3, range(0, 4)), {"highway": "residential", "maxspeed": "30;50", "name": "Calle Tres"}),
        (10, row(4, range(0, 4)), {"highway": "residential", "name": "Calle Norte"}),
        (11, col(1, range(5)), {"highway": "residential", "lanes": "1", "name": "Calle Oeste"}),
        (12, col(3, range(5)), {"highway": "residential", "maxspeed": "none", "name": "Calle Este"}),
        (13, [3000, 3001], {"highway": "footway"}),
        (14, [3002, 3003, 3004, 3005, 3002], {"building": "yes"}),
    ]

    with open(path, "w", newline="\n") as f:
        f.write('<?xml version="1.0" encoding="UTF-8"?>\n')
        f.write('<osm version="0.6" generator="gen_minicity.py">\n')
        for nid in sorted(nodes):
            lat, lon = nodes[nid]
            f.write(f'  <node id="{nid}" lat="{lat:.7f}" lon="{lon:.7f}"/>\n')
        for wid, refs, tags in ways:
            f.write(f'  <way id="{wid}">\n')
            for r in refs:
                f.write(f'    <nd ref="{r}"/>\n')
            for k, v in tags.items():
                f.write(f'    <tag k="{k}" v="{v}"/>\n')
            f.write("  </way>\n")
        f.write("</osm>\n")


# sensor id, grid position (placed at a fraction along a grid edge), class scale, lanes override
SENSORS = [
    ("S01", (0.0, 1.5), 900.0, ""),   # primary west
    ("S02", (0.0, 3.5), 850.0, ""),   # primary west, north half
    ("S03", (1.5, 2.0), 520.0, ""),   # secondary west half
    ("S04", (3.5, 2.0), 560.0, "3"),  # secondary east half
    ("S05", (2.0, 0.7), 300.0, ""),   # tertiary
    ("S06", (2.5, 4.0), 90.0, ""),    # residential north
    ("S07", (1.0, 3.3), 110.0, ""),   # residential west column
    ("S08", (4.0, 1.5), 1400.0, ""),  # motorway
]

START = dt.date(2019, 1, 1)
DAYS = 60
HOLIDAYS = [dt.date(2019, 1, 1), dt.date(2019, 1, 6), dt.date(2019, 2, 14)]


class Lcg:
    def __init__(self, seed):
        self.state = seed & 0xFFFFFFFFFFFFFFFF

    def next(self):
        self.state = (6364136223846793005 * self.state + 1442695040888963407) & 0xFFFFFFFFFFFFFFFF
        return (self.state >> 11) / float(1 << 53)


def bump(t, center, width):
    return math.exp(-0.5 * ((t - center) / width) ** 2)


def shape(slot, weekend, kind):
    t = slot / 4.0
    if weekend:
        return 0.08 + 0.55 * bump(t, 13.5, 3.5) + 0.25 * bump(t, 20.0, 2.0)
    am = 1.0 if kind % 2 == 0 else 0.55
    pm = 0.55 if kind % 2 == 0 else 1.0
    return 0.06 + am * bump(t, 8.25, 1.2) + 0.45 * bump(t, 13.5, 2.5) + pm * bump(t, 18.5, 1.5)


def write_traffic(dirpath):
    os.makedirs(dirpath, exist_ok=True)
    for k, (sid, _pos, scale, _lanes) in enumerate(SENSORS):
        rng = Lcg(1000 + k)
        rows = []
        for d in range(DAYS):
            date = START + dt.timedelta(days=d)
            weekend = date.weekday() >= 5 or date in HOLIDAYS
            for slot in range(96):
                # a few missing samples and one spike exercise the cleaning stage
                if k == 2 and d == 10 and slot in (40, 41):
                    continue
                if k == 4 and d == 20 and 50 <= slot < 58:
                    continue
                base = scale * shape(slot, weekend, k)
                flow = round(base * (0.9 + 0.2 * rng.next()))
                if k == 5 and d == 30 and slot == 70:
                    flow *= 12
                ts = dt.datetime.combine(date, dt.time()) + dt.timedelta(minutes=15 * slot)
                rows.append(f"{sid},{ts.strftime('%Y-%m-%dT%H:%M:%S')},{flow}")
        with open(os.path.join(dirpath, f"{sid}.csv"), "w", newline="\n") as f:
            f.write("sensor_id,timestamp,flow\n")
            f.write("\n".join(rows))
            f.write("\n")


def write_sensors(path):
    with open(path, "w", newline="\n") as f:
        f.write("sensor_id,lat,lon,road_type_override,lanes_override\n")
        for sid, (x, y), _scale, lanes in SENSORS:
            lat, lon = grid_coord(x, y)
            # a few meters off the centreline, as a roadside loop would be
            lat += 4.0 / M_PER_DEG_LAT
            f.write(f"{sid},{lat:.7f},{lon:.7f},,{lanes}\n")


def write_holidays(path):
    with open(path, "w", newline="\n") as f:
        for h in HOLIDAYS:
            f.write(h.isoformat() + "\n")


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/minicity"
    os.makedirs(out, exist_ok=True)
    write_osm(os.path.join(out, "minicity.osm"))
    write_sensors(os.path.join(out, "sensors.csv"))
    write_holidays(os.path.join(out, "holidays.csv"))
    write_traffic(os.path.join(out, "traffic"))


if __name__ == "__main__":
    main()
