"""Tab-delimited file formats for markets, trips, coefficients and outputs.

Every file has a header row. Numbers are written with 6 significant digits
and rows are sorted by id, so saving a loaded canonical file reproduces it
byte for byte.
"""
from __future__ import annotations

import csv
import math
import warnings
from pathlib import Path

import numpy as np

from .choice import CoefficientSet, table1_coefficients
from .design import Observation
from .errors import DanglingReference, DataWarning, MatrixError, ParseError
from .estimation import EstimationResult, ModelFamily
from .spatial import Market, MatrixDistance, MetricDistance, Outlet, Point, Zone

OUTLET_COLUMNS = ("id", "x_km", "y_km", "quality")
ZONE_COLUMNS = ("id", "x_km", "y_km", "opportunities")
TRIP_COLUMNS = (
    "id", "origin_id", "destination_id", "chosen_outlet_id",
    "aware_before", "minutes_aware", "regular", "morning",
)
AWARE_COLUMNS = ("aware_x_km", "aware_y_km")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"


def write_table(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(r if isinstance(r, str) else fmt(r) for r in row) + "\n")
    return path


def read_table(path, required=(), *, strict: bool = False, known=None):
    """Read a tab-delimited file into ``(header, [(line_no, row_dict), ...])``.

    Missing required columns and ragged rows raise :class:`ParseError`.
    Columns outside ``known`` raise in strict mode and warn otherwise.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        lines = list(csv.reader(fh, delimiter="\t"))
    if not lines:
        return None, []
    header = [h.strip() for h in lines[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(path, 1, f"missing column(s) {', '.join(missing)}")
    if len(set(header)) != len(header):
        raise ParseError(path, 1, "duplicate column names")
    if known is not None:
        extra = [c for c in header if c not in known]
        if extra and strict:
            raise ParseError(path, 1, f"unknown column(s) {', '.join(extra)}")
        if extra:
            warnings.warn(f"{path.name}: unknown column(s) {', '.join(extra)}", DataWarning, stacklevel=3)
    rows = []
    for i, fields in enumerate(lines[1:], start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(header):
            raise ParseError(path, i, f"expected {len(header)} fields, found {len(fields)}")
        rows.append((i, dict(zip(header, (f.strip() for f in fields)))))
    return header, rows


def _num(path, line, row, key, *, nonneg=False) -> float:
    try:
        v = float(row[key])
    except ValueError:
        raise ParseError(path, line, f"{key}: not a number: {row[key]!r}") from None
    if not math.isfinite(v):
        raise ParseError(path, line, f"{key}: not finite")
    if nonneg and v < 0:
        raise ParseError(path, line, f"{key}: must be >= 0")
    return v


def _unique(path, rows):
    seen = set()
    for line, row in rows:
        if row["id"] in seen:
            raise ParseError(path, line, f"duplicate id {row['id']!r}")
        seen.add(row["id"])


# -- market ------------------------------------------------------------------


def _read_keyvalue(path) -> dict:
    _, rows = read_table(path, ("key", "value"))
    return {row["key"]: (line, row["value"]) for line, row in rows}


def load_market(directory, *, strict: bool = False) -> Market:
    """Load ``outlets.tsv``, ``zones.tsv``, ``market.tsv`` and optional ``distances.tsv``."""
    directory = Path(directory)
    op = directory / "outlets.tsv"
    _, orows = read_table(op, OUTLET_COLUMNS, strict=strict, known=OUTLET_COLUMNS)
    _unique(op, orows)
    outlets = [
        Outlet(r["id"], Point(_num(op, ln, r, "x_km"), _num(op, ln, r, "y_km")), _num(op, ln, r, "quality"))
        for ln, r in orows
    ]
    zp = directory / "zones.tsv"
    zones = []
    if zp.exists():
        _, zrows = read_table(zp, ZONE_COLUMNS, strict=strict, known=ZONE_COLUMNS)
        _unique(zp, zrows)
        zones = [
            Zone(r["id"], Point(_num(zp, ln, r, "x_km"), _num(zp, ln, r, "y_km")),
                 _num(zp, ln, r, "opportunities", nonneg=True))
            for ln, r in zrows
        ]

    cfg = {}
    mp = directory / "market.tsv"
    if mp.exists():
        cfg = _read_keyvalue(mp)
    params = {}
    for key in ("comp_radius", "t_star", "speed", "scale"):
        if key in cfg:
            line, raw = cfg[key]
            params[key] = _num(mp, line, {key: raw}, key)
    metric = cfg.get("metric", (0, "euclidean"))[1]

    dp = directory / "distances.tsv"
    if dp.exists():
        distances = _load_matrix(dp, outlets, zones)
    else:
        if metric not in ("euclidean", "rectilinear"):
            raise ParseError(mp, cfg["metric"][0], f"unknown metric {metric!r}")
        distances = MetricDistance(metric, params.get("scale", 1.0))
    kw = {k: params[k] for k in ("comp_radius", "t_star", "speed") if k in params}
    try:
        return Market(outlets, zones, distances, **kw)
    except ValueError as exc:
        raise ParseError(mp, 0, str(exc)) from None


def _load_matrix(path, outlets, zones) -> MatrixDistance:
    with open(path, newline="") as fh:
        lines = list(csv.reader(fh, delimiter="\t"))
    if not lines:
        raise ParseError(path, 1, "empty distance matrix")
    ids = [c.strip() for c in lines[0][1:]]
    rows, vals = [], []
    for i, fields in enumerate(lines[1:], start=2):
        if not fields:
            continue
        if len(fields) != len(ids) + 1:
            raise ParseError(path, i, f"expected {len(ids) + 1} fields, found {len(fields)}")
        rows.append(fields[0].strip())
        try:
            vals.append([float(v) for v in fields[1:]])
        except ValueError:
            raise ParseError(path, i, "non-numeric distance") from None
    if rows != ids:
        raise MatrixError(f"{path}: row ids must match column ids in the same order")
    m = np.array(vals, dtype=float).reshape(len(ids), len(ids))
    if not np.all(np.isfinite(m)):
        raise MatrixError(f"{path}: non-finite distance")
    if (m < 0).any():
        i, j = np.argwhere(m < 0)[0]
        raise MatrixError(f"{path}: negative distance {ids[i]} -> {ids[j]}")
    if np.any(np.diag(m) != 0):
        raise MatrixError(f"{path}: nonzero diagonal")
    known = set(ids)
    for loc in [o.id for o in outlets] + [z.id for z in zones]:
        if loc not in known:
            raise DanglingReference(f"{path}: no distance row for {loc!r}", loc)
    dist = MatrixDistance(ids, m)
    asym = dist.asymmetry_count
    if asym:
        warnings.warn(f"{path.name}: {asym} asymmetric distance pair(s)", DataWarning, stacklevel=3)
    return dist


def save_market(market: Market, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    outlets = sorted(market.outlets, key=lambda o: o.id)
    write_table(directory / "outlets.tsv", OUTLET_COLUMNS,
                [(o.id, o.location.x, o.location.y, o.quality) for o in outlets])
    zones = sorted(market.zones, key=lambda z: z.id)
    write_table(directory / "zones.tsv", ZONE_COLUMNS,
                [(z.id, z.centroid.x, z.centroid.y, z.opportunities) for z in zones])
    cfg = [("comp_radius", market.comp_radius), ("speed", market.speed), ("t_star", market.t_star)]
    d = market.distances
    if d.is_matrix:
        cfg.append(("metric", "matrix"))
        order = np.argsort(d.ids, kind="stable")
        ids = [d.ids[i] for i in order]
        m = d.matrix[np.ix_(order, order)]
        write_table(directory / "distances.tsv", ["id"] + ids, [[k] + list(r) for k, r in zip(ids, m)])
    else:
        cfg += [("metric", d.metric), ("scale", d.scale)]
    write_table(directory / "market.tsv", ("key", "value"), sorted(cfg))
    return directory


# -- trips -------------------------------------------------------------------


class TripTable(list):
    """Loaded observations plus ``rejects``: ``(line, id, reason)`` tuples."""

    def __init__(self, observations=(), rejects=()):
        super().__init__(observations)
        self.rejects = list(rejects)


def _flag(value: str) -> bool:
    if value not in ("0", "1"):
        raise ValueError(f"flag must be 0 or 1, got {value!r}")
    return value == "1"


def load_trips(path, market: Market, *, covariates=(), strict: bool = False) -> TripTable:
    """Read a trip table; invalid rows are collected in ``.rejects``.

    Extra columns are kept as string covariates. Columns not listed in
    ``covariates`` raise in strict mode and warn otherwise.
    """
    path = Path(path)
    known = TRIP_COLUMNS + AWARE_COLUMNS + tuple(covariates)
    header, rows = read_table(path, (), strict=strict, known=None)
    if header is None or not rows:
        warnings.warn(f"{path.name}: no trips", DataWarning, stacklevel=2)
        if header is None:
            return TripTable()
    missing = [c for c in TRIP_COLUMNS if c not in header]
    if missing:
        raise ParseError(path, 1, f"missing column(s) {', '.join(missing)}")
    extra = [c for c in header if c not in known]
    if extra and strict:
        raise ParseError(path, 1, f"unknown column(s) {', '.join(extra)}")
    if extra:
        warnings.warn(f"{path.name}: unknown column(s) {', '.join(extra)}", DataWarning, stacklevel=2)
    cov_cols = [c for c in header if c not in TRIP_COLUMNS + AWARE_COLUMNS]

    out, rejects, seen = [], [], set()
    for line, r in rows:
        tid = r["id"]
        try:
            if tid in seen:
                raise ValueError("duplicate trip id")
            aware = _flag(r["aware_before"])
            regular = _flag(r["regular"])
            morning = _flag(r["morning"])
            minutes = float(r["minutes_aware"])
            if not math.isfinite(minutes) or minutes < 0:
                raise ValueError("minutes_aware must be finite and >= 0")
            if aware and minutes > 0:
                raise ValueError("aware_before=1 contradicts minutes_aware > 0")
            for key in ("origin_id", "destination_id"):
                if r[key] not in market.zone_index:
                    raise ValueError(f"unknown zone {r[key]!r}")
            if r["chosen_outlet_id"] not in market.outlet_index:
                raise ValueError(f"unknown outlet {r['chosen_outlet_id']!r}")
            if r["origin_id"] == r["destination_id"]:
                raise ValueError("origin equals destination")
            point = None
            ax, ay = r.get("aware_x_km", ""), r.get("aware_y_km", "")
            if ax or ay:
                if aware:
                    raise ValueError("awareness point given for an aware-before trip")
                point = Point(float(ax), float(ay))
        except ValueError as exc:
            rejects.append((line, tid, str(exc)))
            continue
        seen.add(tid)
        out.append(Observation(
            tid, r["origin_id"], r["destination_id"], r["chosen_outlet_id"], aware, minutes,
            regular, morning, point, {c: r[c] for c in cov_cols},
        ))
    return TripTable(out, rejects)


def save_trips(observations, path) -> Path:
    obs = sorted(observations, key=lambda o: o.id)
    has_point = any(o.awareness_point is not None for o in obs)
    cov = sorted({k for o in obs for k in o.covariates})
    header = list(TRIP_COLUMNS) + (list(AWARE_COLUMNS) if has_point else []) + cov
    rows = []
    for o in obs:
        row = [o.id, o.origin, o.destination, o.chosen, o.aware_before, o.minutes_aware, o.regular, o.morning]
        if has_point:
            row += ["", ""] if o.awareness_point is None else [o.awareness_point.x, o.awareness_point.y]
        row += [str(o.covariates.get(k, "")) for k in cov]
        rows.append(row)
    return write_table(path, header, rows)


# -- coefficients and reports ------------------------------------------------


def save_coefficients(source, path, family: ModelFamily | None = None) -> Path:
    """Write ``param / value / std_error`` rows preceded by the family rows."""
    if isinstance(source, EstimationResult):
        family, coeffs, se = source.family, source.coefficients, source.std_errors
    else:
        from .estimation import infer_family

        coeffs, se = source, None
        family = family or infer_family(coeffs)
    rows = [("family", family.name, "")]
    if family.kind == "mixed":
        rows += [("draws", fmt(family.draws), ""), ("seed", fmt(family.seed), "")]
    for i, (name, value) in enumerate(zip(family.param_names(), family.pack(coeffs))):
        rows.append((name, fmt(value), "" if se is None else fmt(se[i])))
    return write_table(path, ("param", "value", "std_error"), rows)


def load_coefficients(path) -> tuple[CoefficientSet, ModelFamily]:
    """Read a coefficient file; ``table1`` or ``table1:<family>`` loads published values."""
    spec = str(path)
    if spec.startswith("table1"):
        name = spec.partition(":")[2] or "latent2"
        return table1_coefficients(name), ModelFamily.from_name("latent2" if name == "latent2" else name)
    path = Path(path)
    _, rows = read_table(path, ("param", "value"))
    meta = {r["param"]: r["value"] for _, r in rows if r["param"] in ("family", "draws", "seed")}
    if "family" not in meta:
        raise ParseError(path, 1, "no family row")
    family = ModelFamily.from_name(
        meta["family"], draws=int(meta.get("draws", 200)), seed=int(meta.get("seed", 0))
    )
    values = {r["param"]: (ln, r) for ln, r in rows}
    theta = []
    for name in family.param_names():
        if name not in values:
            raise ParseError(path, 0, f"missing parameter {name}")
        ln, r = values[name]
        theta.append(_num(path, ln, r, "value"))
    return family.unpack(theta), family


def write_report(result: EstimationResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"family\t{result.family.name}",
        f"n_obs\t{result.n_obs}",
        f"k_params\t{result.k_params}",
        f"loglik\t{fmt(result.loglik)}",
        f"aic\t{fmt(result.aic)}",
        f"bic\t{fmt(result.bic)}",
        f"converged\t{int(result.converged)}",
        f"grad_norm\t{result.grad_norm:.3e}",
        f"starts\t{result.starts_used}",
        f"iterations\t{result.iterations}",
    ]
    if result.diagnostic:
        lines.append(f"diagnostic\t{result.diagnostic}")
    lines.append("")
    lines.append("param\tvalue\tstd_error\tz")
    se = result.std_errors
    for i, (name, v) in enumerate(zip(result.param_names, result.estimates)):
        s = "" if se is None else fmt(se[i])
        z = "" if se is None or se[i] == 0 else fmt(v / se[i])
        lines.append(f"{name}\t{fmt(v)}\t{s}\t{z}")
    path.write_text("\n".join(lines) + "\n")
    return path


# -- scenarios ---------------------------------------------------------------


_TUPLE_KEYS = ("grid", "origin", "destination", "competitor", "center")
_FLOAT_KEYS = (
    "unit_km", "base_quality", "target_quality", "center_opportunities",
    "t_star", "speed", "comp_radius", "destination_share",
)


def load_scenario(path):
    """Build a :class:`~onway.scenario.ScenarioSpec` from a ``key / value`` file.

    Points are written ``x,y``; ``coeffs`` names a coefficient file (relative
    to the config) or ``table1``.
    """
    from .scenario import ScenarioSpec

    path = Path(path)
    cfg = _read_keyvalue(path)
    kw = {}
    for key, (line, raw) in cfg.items():
        try:
            if key in _TUPLE_KEYS:
                if raw.lower() in ("", "none"):
                    kw[key] = None
                    continue
                parts = tuple(float(p) for p in raw.split(","))
                if len(parts) != 2:
                    raise ValueError("expected two comma-separated numbers")
                kw[key] = tuple(int(p) for p in parts) if key == "grid" else parts
            elif key in _FLOAT_KEYS:
                kw[key] = None if raw.lower() in ("", "none") else float(raw)
            elif key == "n_points":
                kw[key] = int(raw)
            elif key in ("regular", "morning"):
                kw[key] = _flag(raw)
            elif key == "awareness":
                kw[key] = raw
            elif key == "coeffs":
                target = raw if raw.startswith("table1") else path.parent / raw
                kw[key] = load_coefficients(target)[0]
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
    return ScenarioSpec(**kw)


def write_field(values: np.ndarray, path) -> Path:
    """Dense ``[y, x]`` matrix: header row of x indices, one row per y."""
    h, w = values.shape
    header = ["y"] + [str(x) for x in range(w)]
    return write_table(path, header, ([str(y)] + list(values[y]) for y in range(h)))


def read_field(path) -> np.ndarray:
    with open(path, newline="") as fh:
        lines = list(csv.reader(fh, delimiter="\t"))
    return np.array([[float(v) for v in row[1:]] for row in lines[1:]])
