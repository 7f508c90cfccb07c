import json
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from designsearch.budget import estimate_tokens
from designsearch.embedding import tokenize
from designsearch.gdr import (
    ColorWeight,
    Element,
    Frame,
    GdrDocument,
    MalformedDocument,
    Page,
    Placement,
    Region,
    SchemaViolation,
    compress_gdr,
    mutate_element,
    parse_gdr,
    resolve_scope,
    serialize_context,
    serialize_gdr,
    stopwords,
    validate_gdr,
)

MINIMAL = '{"gdrVersion":"v","pages":[]}'


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def test_parse_listing_shape_fixture(fixtures_dir):
    doc = parse_gdr((fixtures_dir / "gdr" / "listing1.json").read_text())
    assert doc.gdr_version == "assistant-100"
    assert len(doc.pages) == 1
    page = doc.pages[0]
    assert page.id == "page-0"
    assert len(page.elements) == 1
    el = page.elements[0]
    assert el.element_type == "image"
    assert el.colors[0] == ColorWeight(color="#040404", weight=0.71)
    # optional fields default without being present in the file
    assert el.placement == Placement()
    assert el.selected is False
    assert page.width_px > 0


def test_parse_minimal_document():
    doc = parse_gdr(MINIMAL)
    assert doc.gdr_version == "v"
    assert doc.pages == ()


def test_parse_rejects_out_of_range_opacity():
    raw = json.dumps(
        {
            "gdrVersion": "v",
            "pages": [{"id": "p", "elements": [{"id": "e", "type": "image", "opacity": 1.5}]}],
        }
    )
    with pytest.raises(SchemaViolation) as err:
        parse_gdr(raw)
    assert err.value.path == "pages[0].elements[0].opacity"


def test_parse_missing_required_field():
    raw = '{"gdrVersion":"v","pages":[{"id":"p","elements":[{"type":"image"}]}]}'
    with pytest.raises(SchemaViolation) as err:
        parse_gdr(raw)
    assert err.value.path == "pages[0].elements[0].id"


def test_parse_wrong_type():
    raw = '{"gdrVersion": 3, "pages": []}'
    with pytest.raises(SchemaViolation) as err:
        parse_gdr(raw)
    assert err.value.path == "gdrVersion"


def test_parse_malformed_json():
    with pytest.raises(MalformedDocument):
        parse_gdr("{not json")


def test_unknown_fields_preserved(fixtures_dir):
    raw = (fixtures_dir / "gdr" / "listing1.json").read_text()
    doc = parse_gdr(raw)
    assert doc.pages[0].elements[0].regions[0].extras == {"box": [120, 80, 420, 360]}
    assert '"box"' in serialize_gdr(doc)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def test_all_golden_fixtures_validate_clean(gdr_docs):
    for name, doc in gdr_docs.items():
        assert validate_gdr(doc) == [], name


def test_weight_sum_violation(gdr_docs):
    doc = mutate_element(
        gdr_docs["listing1.json"],
        0,
        0,
        colors=(ColorWeight("#111111", 0.7), ColorWeight("#222222", 0.5)),
    )
    violations = validate_gdr(doc)
    assert len(violations) == 1
    assert violations[0].path == "pages[0].elements[0].colors"


def test_duplicate_element_id_names_the_id(gdr_docs):
    doc = gdr_docs["coffee_poster.json"]
    first = doc.pages[0].elements[0]
    doc = mutate_element(doc, 0, 1, id=first.id)
    violations = validate_gdr(doc)
    assert len(violations) == 1
    assert violations[0].path == "pages[0].elements[1].id"
    assert first.id in violations[0].message


MUTATIONS = [
    ("opacity_above_one", dict(opacity=1.5), "pages[0].elements[0].opacity"),
    ("opacity_negative", dict(opacity=-0.2), "pages[0].elements[0].opacity"),
    ("unknown_element_type", dict(element_type="sticker"), "pages[0].elements[0].type"),
    (
        "weight_sum_above_one",
        dict(colors=(ColorWeight("#101010", 0.8), ColorWeight("#202020", 0.4))),
        "pages[0].elements[0].colors",
    ),
    (
        "weight_zero",
        dict(colors=(ColorWeight("#101010", 0.0),)),
        "pages[0].elements[0].colors[0].weight",
    ),
    (
        "weight_above_one",
        dict(colors=(ColorWeight("#101010", 1.4),)),
        "pages[0].elements[0].colors[0].weight",
    ),
    (
        "bad_hex_short",
        dict(colors=(ColorWeight("#12345", 0.5),)),
        "pages[0].elements[0].colors[0].color",
    ),
    (
        "bad_hex_digits",
        dict(colors=(ColorWeight("#GGGGGG", 0.5),)),
        "pages[0].elements[0].colors[0].color",
    ),
    (
        "region_score_above_one",
        dict(regions=(Region("cat", 1.5),)),
        "pages[0].elements[0].regions[0].score",
    ),
    (
        "region_label_empty",
        dict(regions=(Region("", 0.5),)),
        "pages[0].elements[0].regions[0].label",
    ),
    (
        "zero_scale",
        dict(placement=Placement(scale_x=0.0)),
        "pages[0].elements[0].placement.scaleX",
    ),
    (
        "inverted_frame",
        dict(frame=Frame((10.0, 10.0), (0.0, 10.0), (0.0, 0.0), (10.0, 0.0))),
        "pages[0].elements[0].frame",
    ),
    (
        "zero_height_frame",
        dict(frame=Frame((0.0, 5.0), (10.0, 5.0), (10.0, 5.0), (0.0, 5.0))),
        "pages[0].elements[0].frame",
    ),
]


@pytest.mark.parametrize("name,changes,expected_path", MUTATIONS, ids=[m[0] for m in MUTATIONS])
def test_single_field_mutations(gdr_docs, name, changes, expected_path):
    doc = mutate_element(gdr_docs["listing1.json"], 0, 0, **changes)
    paths = [v.path for v in validate_gdr(doc)]
    assert paths == [expected_path]


def test_empty_version_and_bad_page_dimensions(gdr_docs):
    from dataclasses import replace

    doc = replace(gdr_docs["listing1.json"], gdr_version="")
    assert [v.path for v in validate_gdr(doc)] == ["gdrVersion"]

    base = gdr_docs["listing1.json"]
    doc = replace(base, pages=(replace(base.pages[0], width_px=-5.0),))
    assert [v.path for v in validate_gdr(doc)] == ["pages[0].widthPx"]


def test_duplicate_page_id(gdr_docs):
    from dataclasses import replace

    base = gdr_docs["empty.json"]
    page = Page(id="p")
    doc = replace(base, pages=(page, page))
    assert [v.path for v in validate_gdr(doc)] == ["pages[1].id"]


# ---------------------------------------------------------------------------
# Canonical serialization and round trips
# ---------------------------------------------------------------------------


def test_canonical_golden(fixtures_dir, golden_dir):
    doc = parse_gdr((fixtures_dir / "gdr" / "listing1.json").read_text())
    assert serialize_gdr(doc) == (golden_dir / "listing1_canonical.json").read_text()


def test_context_golden(fixtures_dir, golden_dir):
    doc = parse_gdr((fixtures_dir / "gdr" / "listing1.json").read_text())
    text = serialize_context(doc)
    assert text == (golden_dir / "listing1_context.txt").read_text()
    assert "image" in text
    assert "#040404" in text


def test_round_trip_idempotent_on_fixtures(gdr_docs):
    for name, doc in gdr_docs.items():
        once = serialize_gdr(doc)
        again = serialize_gdr(parse_gdr(once))
        assert once == again, name
        assert parse_gdr(once) == parse_gdr(again), name


def test_empty_document_context_is_header_only():
    text = serialize_context(parse_gdr(MINIMAL))
    assert text == "canvas gdr=v pages=0\n"


# ---------------------------------------------------------------------------
# Compression
# ---------------------------------------------------------------------------


def test_compress_empty_document():
    summary = compress_gdr(parse_gdr(MINIMAL))
    assert summary.per_element == ()
    assert summary.domain_cues == ()
    assert summary.palette_global == ()


def test_compress_keeps_top_two_colors_by_weight(gdr_docs):
    doc = mutate_element(
        gdr_docs["listing1.json"],
        0,
        0,
        colors=(
            ColorWeight("#040404", 0.71),
            ColorWeight("#112233", 0.10),
            ColorWeight("#445566", 0.05),
        ),
    )
    summary = compress_gdr(doc)
    assert [cw.color for cw in summary.per_element[0].top_colors] == ["#040404", "#112233"]


def test_compress_caption_truncated_to_limit(gdr_docs):
    summary = compress_gdr(gdr_docs["coffee_poster.json"])
    for es in summary.per_element:
        assert len(es.caption) <= 120


def _cue_oracle(doc):
    counts = Counter()
    stops = stopwords()
    for page in doc.pages:
        for el in page.elements:
            for text in list(el.content) + [r.label for r in el.regions]:
                counts.update(t for t in tokenize(text) if t not in stops)
    return [t for t, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:5]]


def test_domain_cues_match_hand_count(gdr_docs):
    for name, doc in gdr_docs.items():
        assert list(compress_gdr(doc).domain_cues) == _cue_oracle(doc), name


def test_coffee_fixture_cues_contain_coffee(gdr_docs):
    cues = compress_gdr(gdr_docs["coffee_poster.json"]).domain_cues
    assert "coffee" in cues
    assert cues[0] == "coffee"


def test_summary_shorter_than_full_on_fixtures(gdr_docs):
    for name, doc in gdr_docs.items():
        if not doc.elements():
            continue
        summary_text = serialize_context(compress_gdr(doc))
        full_text = serialize_context(doc)
        assert len(summary_text) < len(full_text), name


def test_summary_token_budget_on_rich_fixtures(gdr_docs):
    checked = 0
    for name, doc in gdr_docs.items():
        if len(doc.elements()) < 3:
            continue
        checked += 1
        full = estimate_tokens(serialize_context(doc))
        compact = estimate_tokens(serialize_context(compress_gdr(doc)))
        assert compact <= 0.5 * full, name
    assert checked >= 4


# ---------------------------------------------------------------------------
# Scope
# ---------------------------------------------------------------------------


def test_scope_global_when_nothing_selected(gdr_docs):
    scope = resolve_scope(gdr_docs["coffee_poster.json"])
    assert scope.value == "global"
    assert scope.selected_element_ids == ()


def test_scope_selection_single(gdr_docs):
    scope = resolve_scope(gdr_docs["stone_banner.json"])
    assert scope.value == "selection"
    assert scope.selected_element_ids == ("stone-bg",)


def test_scope_selection_two_elements_document_order(gdr_docs):
    doc = gdr_docs["coffee_poster.json"]
    doc = mutate_element(doc, 0, 1, selected=True)
    doc = mutate_element(doc, 0, 3, selected=True)
    scope = resolve_scope(doc)
    assert scope.value == "selection"
    assert scope.selected_element_ids == ("headline", "stamp")


def test_scope_region_marquee():
    raw = json.dumps(
        {
            "gdrVersion": "v",
            "pages": [{"id": "p", "regionMarquee": [10, 10, 200, 100], "elements": []}],
        }
    )
    assert resolve_scope(parse_gdr(raw)).value == "region"


# ---------------------------------------------------------------------------
# Property tests over generated documents
# ---------------------------------------------------------------------------

_WORDS = ["coffee", "beans", "roast", "salon", "stone", "leaf", "star", "car", "city"]

_colors = st.lists(
    st.tuples(
        st.from_regex(r"#[0-9a-f]{6}", fullmatch=True),
        st.floats(min_value=0.01, max_value=0.3),
    ),
    max_size=3,
)

_captions = st.lists(
    st.lists(st.sampled_from(_WORDS), min_size=1, max_size=6).map(" ".join), max_size=2
)


@st.composite
def _elements(draw, idx):
    x0 = draw(st.floats(min_value=0, max_value=100))
    y0 = draw(st.floats(min_value=0, max_value=100))
    w = draw(st.floats(min_value=1, max_value=500))
    h = draw(st.floats(min_value=1, max_value=500))
    colors = tuple(ColorWeight(c, wt) for c, wt in draw(_colors))
    regions = tuple(
        Region(label, score)
        for label, score in draw(
            st.lists(
                st.tuples(st.sampled_from(_WORDS), st.floats(min_value=0, max_value=1)),
                max_size=2,
            )
        )
    )
    return Element(
        id=f"el-{idx}",
        element_type=draw(st.sampled_from(["image", "text", "shape", "icon", "video", "logo"])),
        opacity=draw(st.floats(min_value=0, max_value=1)),
        z_index=draw(st.integers(min_value=-5, max_value=5)),
        frame=Frame((x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)),
        colors=colors,
        content=tuple(draw(_captions)),
        regions=regions,
        selected=draw(st.booleans()),
    )


@st.composite
def documents(draw):
    n = draw(st.integers(min_value=0, max_value=4))
    elements = tuple(draw(_elements(i)) for i in range(n))
    page = Page(id="page-0", width_px=1920.0, height_px=1080.0, elements=elements)
    return GdrDocument(gdr_version="gen-1", pages=(page,))


@given(documents())
def test_generated_documents_validate_and_round_trip(doc):
    assert validate_gdr(doc) == []
    once = serialize_gdr(doc)
    reparsed = parse_gdr(once)
    assert reparsed == doc
    assert serialize_gdr(reparsed) == once


@given(documents())
def test_scope_selection_iff_selected_ids(doc):
    scope = resolve_scope(doc)
    any_selected = any(el.selected for _, _, el in doc.elements())
    assert (scope.value == "selection") == any_selected
    assert (scope.value == "selection") == (len(scope.selected_element_ids) > 0)


@given(documents())
def test_summary_strictly_shorter_for_nonempty(doc):
    if not doc.elements():
        return
    assert len(serialize_context(compress_gdr(doc))) < len(serialize_context(doc))
