"""Typed GDR canvas documents: parsing, validation, compression, serialization.

A GDR file is a JSON document describing a design canvas: pages holding
elements with geometry, placement, colors, captions, detected regions,
and selection state. Unknown fields are preserved through a round trip
but never interpreted. The canonical on-disk form uses schema key order
and 2-space indentation so golden files can be compared byte for byte.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Any

from .embedding import tokenize

ELEMENT_TYPES = ("image", "text", "shape", "icon", "video", "logo")
SCOPE_VALUES = ("selection", "region", "global")

CAPTION_LIMIT = 120
TOP_COLORS_PER_ELEMENT = 2
GLOBAL_PALETTE_SIZE = 5
DOMAIN_CUE_COUNT = 5

_HEX_RE = re.compile(r"^#[0-9a-fA-F]{6}$")
_WEIGHT_SUM_SLACK = 1e-6


class MalformedDocument(ValueError):
    """Input is not syntactically parseable."""


class SchemaViolation(ValueError):
    """A required field is missing, mistyped, or out of bounds."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


@dataclass(frozen=True)
class Violation:
    path: str
    message: str


@dataclass(frozen=True)
class ColorWeight:
    color: str
    weight: float
    extras: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Region:
    label: str
    score: float
    extras: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Frame:
    top_left: tuple[float, float]
    top_right: tuple[float, float]
    bottom_right: tuple[float, float]
    bottom_left: tuple[float, float]

    def width(self) -> float:
        return self.bottom_right[0] - self.top_left[0]

    def height(self) -> float:
        return self.bottom_right[1] - self.top_left[1]

    def aspect_ratio(self) -> float:
        h = self.height()
        return self.width() / h if h != 0.0 else math.inf


DEFAULT_FRAME = Frame((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))


@dataclass(frozen=True)
class Placement:
    tx: float = 0.0
    ty: float = 0.0
    rotation: float = 0.0
    scale_x: float = 1.0
    scale_y: float = 1.0


@dataclass(frozen=True)
class Element:
    id: str
    element_type: str
    opacity: float = 1.0
    z_index: int = 0
    frame: Frame = DEFAULT_FRAME
    placement: Placement = Placement()
    colors: tuple[ColorWeight, ...] = ()
    content: tuple[str, ...] = ()
    regions: tuple[Region, ...] = ()
    selected: bool = False
    extras: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Page:
    id: str
    width_px: float = 1920.0
    height_px: float = 1080.0
    elements: tuple[Element, ...] = ()
    region_marquee: tuple[float, float, float, float] | None = None
    extras: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class GdrDocument:
    gdr_version: str
    pages: tuple[Page, ...]
    extras: dict[str, Any] = field(default_factory=dict)

    def elements(self) -> list[tuple[int, int, Element]]:
        """All elements with their (page, element) indices, document order."""
        return [
            (pi, ei, el)
            for pi, page in enumerate(self.pages)
            for ei, el in enumerate(page.elements)
        ]


@dataclass(frozen=True)
class ElementSummary:
    element_type: str
    top_colors: tuple[ColorWeight, ...]
    caption: str
    top_region_label: str | None
    aspect_ratio: float
    selected: bool


@dataclass(frozen=True)
class GdrSummary:
    per_element: tuple[ElementSummary, ...]
    palette_global: tuple[ColorWeight, ...]
    domain_cues: tuple[str, ...]


@dataclass(frozen=True)
class TargetScope:
    value: str
    selected_element_ids: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _typename(value: Any) -> str:
    return type(value).__name__


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaViolation(path, f"expected string, got {_typename(value)}")
    return value


def _as_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(path, f"expected number, got {_typename(value)}")
    return float(value)


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(path, f"expected integer, got {_typename(value)}")
    return value


def _as_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise SchemaViolation(path, f"expected boolean, got {_typename(value)}")
    return value


def _as_list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaViolation(path, f"expected array, got {_typename(value)}")
    return value


def _as_dict(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaViolation(path, f"expected object, got {_typename(value)}")
    return value


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise SchemaViolation(f"{path}.{key}", "missing required field")
    return obj[key]


def _point(value: Any, path: str) -> tuple[float, float]:
    pts = _as_list(value, path)
    if len(pts) != 2:
        raise SchemaViolation(path, f"expected [x, y], got {len(pts)} values")
    return (_as_number(pts[0], f"{path}[0]"), _as_number(pts[1], f"{path}[1]"))


def _extras(obj: dict, known: frozenset[str]) -> dict[str, Any]:
    return {k: obj[k] for k in obj if k not in known}


_COLOR_KEYS = frozenset({"color", "weight"})
_REGION_KEYS = frozenset({"label", "score"})
_FRAME_KEYS = frozenset({"topLeft", "topRight", "bottomRight", "bottomLeft"})
_PLACEMENT_KEYS = frozenset({"tx", "ty", "rotation", "scaleX", "scaleY"})
_ELEMENT_KEYS = frozenset(
    {"id", "type", "opacity", "zIndex", "frame", "placement", "colors", "content",
     "regions", "selected"}
)
_PAGE_KEYS = frozenset({"id", "widthPx", "heightPx", "regionMarquee", "elements"})
_DOC_KEYS = frozenset({"gdrVersion", "pages"})


def _parse_frame(value: Any, path: str) -> Frame:
    obj = _as_dict(value, path)
    tl = _point(_require(obj, "topLeft", path), f"{path}.topLeft")
    br = _point(_require(obj, "bottomRight", path), f"{path}.bottomRight")
    tr = _point(obj["topRight"], f"{path}.topRight") if "topRight" in obj else (br[0], tl[1])
    bl = _point(obj["bottomLeft"], f"{path}.bottomLeft") if "bottomLeft" in obj else (tl[0], br[1])
    return Frame(tl, tr, br, bl)


def _parse_placement(value: Any, path: str) -> Placement:
    obj = _as_dict(value, path)
    return Placement(
        tx=_as_number(obj.get("tx", 0.0), f"{path}.tx"),
        ty=_as_number(obj.get("ty", 0.0), f"{path}.ty"),
        rotation=_as_number(obj.get("rotation", 0.0), f"{path}.rotation"),
        scale_x=_as_number(obj.get("scaleX", 1.0), f"{path}.scaleX"),
        scale_y=_as_number(obj.get("scaleY", 1.0), f"{path}.scaleY"),
    )


def _parse_element(value: Any, path: str) -> Element:
    obj = _as_dict(value, path)
    colors = []
    for i, cw in enumerate(_as_list(obj.get("colors", []), f"{path}.colors")):
        cpath = f"{path}.colors[{i}]"
        cobj = _as_dict(cw, cpath)
        colors.append(
            ColorWeight(
                color=_as_str(_require(cobj, "color", cpath), f"{cpath}.color"),
                weight=_as_number(_require(cobj, "weight", cpath), f"{cpath}.weight"),
                extras=_extras(cobj, _COLOR_KEYS),
            )
        )
    regions = []
    for i, rg in enumerate(_as_list(obj.get("regions", []), f"{path}.regions")):
        rpath = f"{path}.regions[{i}]"
        robj = _as_dict(rg, rpath)
        regions.append(
            Region(
                label=_as_str(_require(robj, "label", rpath), f"{rpath}.label"),
                score=_as_number(_require(robj, "score", rpath), f"{rpath}.score"),
                extras=_extras(robj, _REGION_KEYS),
            )
        )
    content = tuple(
        _as_str(c, f"{path}.content[{i}]")
        for i, c in enumerate(_as_list(obj.get("content", []), f"{path}.content"))
    )
    return Element(
        id=_as_str(_require(obj, "id", path), f"{path}.id"),
        element_type=_as_str(_require(obj, "type", path), f"{path}.type"),
        opacity=_as_number(obj.get("opacity", 1.0), f"{path}.opacity"),
        z_index=_as_int(obj.get("zIndex", 0), f"{path}.zIndex"),
        frame=_parse_frame(obj["frame"], f"{path}.frame") if "frame" in obj else DEFAULT_FRAME,
        placement=_parse_placement(obj.get("placement", {}), f"{path}.placement"),
        colors=tuple(colors),
        content=content,
        regions=tuple(regions),
        selected=_as_bool(obj.get("selected", False), f"{path}.selected"),
        extras=_extras(obj, _ELEMENT_KEYS),
    )


def _parse_page(value: Any, path: str) -> Page:
    obj = _as_dict(value, path)
    marquee = None
    if "regionMarquee" in obj:
        vals = _as_list(obj["regionMarquee"], f"{path}.regionMarquee")
        if len(vals) != 4:
            raise SchemaViolation(f"{path}.regionMarquee", "expected [x, y, w, h]")
        marquee = tuple(_as_number(v, f"{path}.regionMarquee[{i}]") for i, v in enumerate(vals))
    return Page(
        id=_as_str(_require(obj, "id", path), f"{path}.id"),
        width_px=_as_number(obj.get("widthPx", 1920.0), f"{path}.widthPx"),
        height_px=_as_number(obj.get("heightPx", 1080.0), f"{path}.heightPx"),
        elements=tuple(
            _parse_element(el, f"{path}.elements[{i}]")
            for i, el in enumerate(_as_list(obj.get("elements", []), f"{path}.elements"))
        ),
        region_marquee=marquee,
        extras=_extras(obj, _PAGE_KEYS),
    )


def parse_gdr(raw: str, check: bool = True) -> GdrDocument:
    """Parse a GDR document from JSON text.

    Unknown fields are kept in ``extras`` and re-emitted on serialization.
    With ``check`` (the default) the parsed document is also validated and
    the first invariant violation raises ``SchemaViolation``; pass
    ``check=False`` to obtain a structurally parsed document and inspect
    violations via :func:`validate_gdr`.
    """
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc
    obj = _as_dict(data, "$")
    doc = GdrDocument(
        gdr_version=_as_str(_require(obj, "gdrVersion", "$"), "gdrVersion"),
        pages=tuple(
            _parse_page(pg, f"pages[{i}]")
            for i, pg in enumerate(_as_list(_require(obj, "pages", "$"), "pages"))
        ),
        extras=_extras(obj, _DOC_KEYS),
    )
    if check:
        violations = validate_gdr(doc)
        if violations:
            first = violations[0]
            raise SchemaViolation(first.path, first.message)
    return doc


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _validate_element(el: Element, path: str, out: list[Violation]) -> None:
    if el.element_type not in ELEMENT_TYPES:
        out.append(Violation(f"{path}.type", f"unknown element type {el.element_type!r}"))
    if not 0.0 <= el.opacity <= 1.0:
        out.append(Violation(f"{path}.opacity", f"opacity {el.opacity} outside [0, 1]"))
    if el.placement.scale_x <= 0.0:
        out.append(Violation(f"{path}.placement.scaleX", "scale must be positive"))
    if el.placement.scale_y <= 0.0:
        out.append(Violation(f"{path}.placement.scaleY", "scale must be positive"))
    weight_sum = 0.0
    for i, cw in enumerate(el.colors):
        if not _HEX_RE.match(cw.color):
            out.append(Violation(f"{path}.colors[{i}].color", f"bad hex color {cw.color!r}"))
        if not 0.0 < cw.weight <= 1.0:
            out.append(Violation(f"{path}.colors[{i}].weight", f"weight {cw.weight} outside (0, 1]"))
        weight_sum += cw.weight
    if weight_sum > 1.0 + _WEIGHT_SUM_SLACK:
        out.append(Violation(f"{path}.colors", f"color weights sum to {weight_sum:.6g} > 1"))
    for i, rg in enumerate(el.regions):
        if not rg.label:
            out.append(Violation(f"{path}.regions[{i}].label", "label must be non-empty"))
        if not 0.0 <= rg.score <= 1.0:
            out.append(Violation(f"{path}.regions[{i}].score", f"score {rg.score} outside [0, 1]"))
    aspect = el.frame.aspect_ratio()
    if not (math.isfinite(aspect) and aspect > 0.0):
        out.append(Violation(f"{path}.frame", f"aspect ratio {aspect} is not finite and positive"))
    if el.placement.rotation == 0.0:
        tl, br = el.frame.top_left, el.frame.bottom_right
        if tl[0] > br[0] or tl[1] > br[1]:
            out.append(Violation(f"{path}.frame", "axis-aligned frame corners are inverted"))


def validate_gdr(doc: GdrDocument) -> list[Violation]:
    """Return every invariant violation in the document (empty means valid)."""
    out: list[Violation] = []
    if not doc.gdr_version:
        out.append(Violation("gdrVersion", "must be non-empty"))
    seen_pages: set[str] = set()
    for pi, page in enumerate(doc.pages):
        ppath = f"pages[{pi}]"
        if page.id in seen_pages:
            out.append(Violation(f"{ppath}.id", f"duplicate page id {page.id!r}"))
        seen_pages.add(page.id)
        if page.width_px <= 0.0:
            out.append(Violation(f"{ppath}.widthPx", f"width {page.width_px} must be positive"))
        if page.height_px <= 0.0:
            out.append(Violation(f"{ppath}.heightPx", f"height {page.height_px} must be positive"))
        seen_elements: set[str] = set()
        for ei, el in enumerate(page.elements):
            epath = f"{ppath}.elements[{ei}]"
            if el.id in seen_elements:
                out.append(Violation(f"{epath}.id", f"duplicate element id {el.id!r}"))
            seen_elements.add(el.id)
            _validate_element(el, epath, out)
    return out


# ---------------------------------------------------------------------------
# Compression
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    text = resources.files("designsearch").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(text.split())


def _element_caption(el: Element) -> str:
    joined = " ".join(el.content)
    return joined[:CAPTION_LIMIT]


def compress_gdr(doc: GdrDocument) -> GdrSummary:
    """Extractive summary: per-element digest, global palette, domain cues."""
    per_element = []
    color_totals: Counter[str] = Counter()
    token_counts: Counter[str] = Counter()
    stops = stopwords()
    for _, _, el in doc.elements():
        top_colors = tuple(
            sorted(el.colors, key=lambda cw: (-cw.weight, cw.color))[:TOP_COLORS_PER_ELEMENT]
        )
        for cw in el.colors:
            color_totals[cw.color] += cw.weight
        top_region = max(el.regions, key=lambda r: r.score) if el.regions else None
        for text in list(el.content) + [r.label for r in el.regions]:
            token_counts.update(t for t in tokenize(text) if t not in stops)
        per_element.append(
            ElementSummary(
                element_type=el.element_type,
                top_colors=top_colors,
                caption=_element_caption(el),
                top_region_label=top_region.label if top_region else None,
                aspect_ratio=el.frame.aspect_ratio(),
                selected=el.selected,
            )
        )
    total_weight = sum(color_totals.values())
    palette = tuple(
        ColorWeight(color=c, weight=w / total_weight)
        for c, w in sorted(color_totals.items(), key=lambda kv: (-kv[1], kv[0]))[
            :GLOBAL_PALETTE_SIZE
        ]
    )
    cues = tuple(
        tok
        for tok, _ in sorted(token_counts.items(), key=lambda kv: (-kv[1], kv[0]))[
            :DOMAIN_CUE_COUNT
        ]
    )
    return GdrSummary(per_element=tuple(per_element), palette_global=palette, domain_cues=cues)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_compact(x: float) -> str:
    return format(x, ".4g")


def _color_token(cw: ColorWeight) -> str:
    return f"{cw.color}:{_fmt_compact(cw.weight)}"


def serialize_context(obj: GdrDocument | GdrSummary) -> str:
    """Line-oriented canvas rendering used as model context (deterministic)."""
    lines: list[str] = []
    if isinstance(obj, GdrDocument):
        lines.append(f"canvas gdr={obj.gdr_version} pages={len(obj.pages)}")
        for page in obj.pages:
            lines.append(f"page {page.id} {_fmt(page.width_px)}x{_fmt(page.height_px)}")
            for el in page.elements:
                f = el.frame
                lines.append(
                    f"element {el.id} {el.element_type} opacity={_fmt(el.opacity)}"
                    f" z={el.z_index} selected={str(el.selected).lower()}"
                )
                lines.append(
                    "  frame"
                    f" ({_fmt(f.top_left[0])},{_fmt(f.top_left[1])})"
                    f" ({_fmt(f.top_right[0])},{_fmt(f.top_right[1])})"
                    f" ({_fmt(f.bottom_right[0])},{_fmt(f.bottom_right[1])})"
                    f" ({_fmt(f.bottom_left[0])},{_fmt(f.bottom_left[1])})"
                    f" aspect={_fmt(f.aspect_ratio())}"
                )
                p = el.placement
                lines.append(
                    f"  place tx={_fmt(p.tx)} ty={_fmt(p.ty)} rot={_fmt(p.rotation)}"
                    f" sx={_fmt(p.scale_x)} sy={_fmt(p.scale_y)}"
                )
                for cw in el.colors:
                    lines.append(f"  color {cw.color} {_fmt_compact(cw.weight)}")
                for caption in el.content:
                    lines.append(f"  caption {caption}")
                for rg in el.regions:
                    lines.append(f"  region {rg.label} {_fmt(rg.score)}")
    else:
        cues = ",".join(obj.domain_cues)
        lines.append(f"canvas summary elements={len(obj.per_element)} cues={cues}")
        for es in obj.per_element:
            colors = ",".join(_color_token(cw) for cw in es.top_colors)
            region = es.top_region_label if es.top_region_label is not None else "-"
            lines.append(
                f"element {es.element_type} selected={str(es.selected).lower()}"
                f" aspect={_fmt_compact(es.aspect_ratio)} colors={colors} region={region}"
            )
            if es.caption:
                lines.append(f"  caption {es.caption}")
        lines.append("palette " + ",".join(_color_token(cw) for cw in obj.palette_global))
    return "\n".join(lines) + "\n"


def _frame_dict(f: Frame) -> dict[str, Any]:
    return {
        "topLeft": list(f.top_left),
        "topRight": list(f.top_right),
        "bottomRight": list(f.bottom_right),
        "bottomLeft": list(f.bottom_left),
    }


def _element_dict(el: Element) -> dict[str, Any]:
    d: dict[str, Any] = {
        "id": el.id,
        "type": el.element_type,
        "opacity": el.opacity,
        "zIndex": el.z_index,
        "frame": _frame_dict(el.frame),
        "placement": {
            "tx": el.placement.tx,
            "ty": el.placement.ty,
            "rotation": el.placement.rotation,
            "scaleX": el.placement.scale_x,
            "scaleY": el.placement.scale_y,
        },
        "colors": [
            {"color": cw.color, "weight": cw.weight, **dict(sorted(cw.extras.items()))}
            for cw in el.colors
        ],
        "content": list(el.content),
        "regions": [
            {"label": rg.label, "score": rg.score, **dict(sorted(rg.extras.items()))}
            for rg in el.regions
        ],
        "selected": el.selected,
    }
    d.update(sorted(el.extras.items()))
    return d


def serialize_gdr(doc: GdrDocument) -> str:
    """Canonical file form: schema key order, 2-space indent, trailing newline."""
    pages = []
    for page in doc.pages:
        p: dict[str, Any] = {
            "id": page.id,
            "widthPx": page.width_px,
            "heightPx": page.height_px,
        }
        if page.region_marquee is not None:
            p["regionMarquee"] = list(page.region_marquee)
        p["elements"] = [_element_dict(el) for el in page.elements]
        p.update(sorted(page.extras.items()))
        pages.append(p)
    d: dict[str, Any] = {"gdrVersion": doc.gdr_version, "pages": pages}
    d.update(sorted(doc.extras.items()))
    return json.dumps(d, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Scope
# ---------------------------------------------------------------------------


def resolve_scope(doc: GdrDocument) -> TargetScope:
    """Selection wins over region marquee; otherwise the whole canvas."""
    selected = tuple(el.id for _, _, el in doc.elements() if el.selected)
    if selected:
        return TargetScope(value="selection", selected_element_ids=selected)
    if any(page.region_marquee is not None for page in doc.pages):
        return TargetScope(value="region")
    return TargetScope(value="global")


def mutate_element(doc: GdrDocument, page_idx: int, el_idx: int, **changes: Any) -> GdrDocument:
    """Rebuild the document with one element replaced (test/fault tooling)."""
    page = doc.pages[page_idx]
    el = replace(page.elements[el_idx], **changes)
    elements = page.elements[:el_idx] + (el,) + page.elements[el_idx + 1 :]
    new_page = replace(page, elements=elements)
    pages = doc.pages[:page_idx] + (new_page,) + doc.pages[page_idx + 1 :]
    return replace(doc, pages=pages)
