#!/usr/bin/env python3
"""Regenerate everything under fixtures/ deterministically.

Builds the GDR canvas fixtures, the 50-asset corpus, the shot bank, the
20-case smoke set, and the 788-case evaluation set with scripted fault
injections, then replays the whole evaluation and asserts that every
(case, policy) pair lands on the verdict the generator intended.
"""

from __future__ import annotations

import json
import sys
from collections import Counter
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"
GOLDEN = REPO / "tests" / "golden"

sys.path.insert(0, str(REPO / "src"))

from designsearch.attribution import Outcome  # noqa: E402
from designsearch.budget import PolicyId, PromptBundle, load_shot_bank_file  # noqa: E402
from designsearch.config import DEFAULT_FALLBACKS  # noqa: E402
from designsearch.embedding import cosine, embed_text, tokenize  # noqa: E402
from designsearch.gdr import compress_gdr, parse_gdr, serialize_context, serialize_gdr  # noqa: E402
from designsearch.harness import load_run_config, run_evaluation  # noqa: E402
from designsearch.index import load_corpus, recall  # noqa: E402
from designsearch.pipeline import ScriptTable, preprocess, rerank, stub_complete  # noqa: E402

POLICIES = [p.value for p in PolicyId]

# Policies ordered by how often faults are injected: never-faulted first.
FAULT_ORDER = [
    "ZeroShot",
    "RetrievalAugmented",
    "TwoStage",
    "MiniShot",
    "ChainOfThought",
    "Baseline",
    "ContextCompression",
]
FAULT_RANK = {name: i for i, name in enumerate(FAULT_ORDER)}

FORBIDDEN_TOKENS = {"deer", "fawn", "meadow", "antler", "wildlife", "sketch", "dandelions"}


# ---------------------------------------------------------------------------
# GDR fixtures
# ---------------------------------------------------------------------------

LISTING1 = {
    "gdrVersion": "assistant-100",
    "pages": [
        {
            "id": "page-0",
            "elements": [
                {
                    "id": "image-0",
                    "type": "image",
                    "opacity": 1,
                    "zIndex": 1,
                    "frame": {"topLeft": [0, 0], "bottomRight": [810, 540]},
                    "colors": [
                        {"color": "#040404", "weight": 0.71},
                        {"color": "#1B4F72", "weight": 0.12},
                    ],
                    "content": [
                        "A blue background with vegetables and an octopus illustration"
                    ],
                    "regions": [
                        {"label": "octopus (animal)", "score": 0.79, "box": [120, 80, 420, 360]}
                    ],
                }
            ],
        }
    ],
}


def _element(eid, etype, frame, colors, content, regions=(), selected=False, z=0):
    return {
        "id": eid,
        "type": etype,
        "opacity": 1.0,
        "zIndex": z,
        "frame": {"topLeft": list(frame[0]), "bottomRight": list(frame[1])},
        "placement": {"tx": 0.0, "ty": 0.0, "rotation": 0.0, "scaleX": 1.0, "scaleY": 1.0},
        "colors": [{"color": c, "weight": w} for c, w in colors],
        "content": list(content),
        "regions": [{"label": lbl, "score": s} for lbl, s in regions],
        "selected": selected,
    }


def _doc(version, page_id, elements, width=1920.0, height=1080.0):
    return {
        "gdrVersion": version,
        "pages": [
            {
                "id": page_id,
                "widthPx": width,
                "heightPx": height,
                "elements": elements,
            }
        ],
    }


COFFEE_POSTER = _doc(
    "desk-1",
    "page-0",
    [
        _element(
            "bg-roast",
            "image",
            ((0, 0), (1920, 1080)),
            [("#3B2A1E", 0.55), ("#131313", 0.25), ("#B98A52", 0.12)],
            [
                "A dark moody photograph of freshly roasted coffee beans spilling from a"
                " burlap sack onto a rustic wooden table, with wisps of steam rising off"
                " the warm coffee, scattered chaff, a brass scoop resting against the"
                " sack, and a copper roasting drum blurred softly in the distance behind"
                " shallow depth of field, lit by one low amber bulb hanging from a"
                " braided cord above the workbench"
            ],
            [("coffee beans", 0.92), ("burlap sack", 0.61), ("roasting drum", 0.44)],
            z=0,
        ),
        _element(
            "headline",
            "text",
            ((120, 80), (1800, 260)),
            [("#F2E8DA", 0.8)],
            [
                "Artisan coffee roasting workshop, from green beans to the perfect"
                " roast, with live cupping sessions, brewing demonstrations and tasting"
                " notes led by our resident roasters every weekend this autumn"
            ],
            z=2,
        ),
        _element(
            "beans-close",
            "image",
            ((1200, 600), (1820, 1020)),
            [("#2E1C10", 0.6), ("#7A4B24", 0.3)],
            [
                "Close-up macro shot of glossy medium roast coffee beans arranged in a"
                " heart shape on a matte black ceramic plate beside a small white cup"
                " of fresh espresso, with fine crema detail, soft window light and a"
                " linen napkin folded under the plate on a slate counter, shot from"
                " forty five degrees with a vintage macro lens wide open"
            ],
            [("coffee beans", 0.95), ("espresso cup", 0.7)],
            z=1,
        ),
        _element(
            "stamp",
            "logo",
            ((80, 860), (320, 1020)),
            [("#B98A52", 0.5), ("#131313", 0.4)],
            [
                "Circular vintage roastery logo stamp with a coffee bean silhouette,"
                " serif lettering around the rim and a distressed letterpress texture"
                " printed in warm copper ink over cream paper"
            ],
            z=3,
        ),
    ],
)

GREEN_CANVAS = _doc(
    "desk-1",
    "page-0",
    [
        _element(
            "jungle-bg",
            "image",
            ((0, 0), (1920, 1080)),
            [("#1E5B2A", 0.5), ("#0B2E14", 0.15), ("#9CCF9C", 0.1), ("#153F1D", 0.08)],
            [
                "Lush green tropical jungle foliage wall with dense monstera and fern"
                " leaves layered over a deep emerald gradient backdrop, soft morning"
                " mist drifting between hanging vines and scattered dew drops catching"
                " thin shafts of light near the top edge of the wall"
            ],
            [("foliage", 0.88), ("monstera leaf", 0.66), ("fern frond", 0.52), ("hanging vine", 0.41)],
        ),
        _element(
            "copy",
            "text",
            ((200, 120), (1720, 320)),
            [("#F4FFF4", 0.7)],
            [
                "Go green this summer with our fresh botanical collection of leafy"
                " prints, breezy linen layouts and illustrated plant bundles curated"
                " for seasonal campaigns, lookbooks and storefront displays, each"
                " delivered with editable swatches, alternate crops and a short"
                " usage guide for web and print"
            ],
            z=1,
        ),
        _element(
            "leaf-badge",
            "shape",
            ((1500, 820), (1840, 1020)),
            [("#3F8E3F", 0.6)],
            [
                "Flat vector leaf badge with rounded edges, a soft drop shadow and a"
                " subtle inner highlight, drawn on a twelve column grid so the mark"
                " stays crisp at any scale, exported with outlined strokes, a padded"
                " safe area and light and dark variants for flexible placement"
            ],
            z=2,
        ),
    ],
)

SALON_FLYER = _doc(
    "desk-1",
    "page-0",
    [
        _element(
            "salon-photo",
            "image",
            ((0, 0), (1920, 900)),
            [("#D8CFC5", 0.5), ("#8A7B6C", 0.3), ("#EFE9E2", 0.12), ("#3E362E", 0.05)],
            [
                "Bright modern salon interior with minimalist styling chairs, large"
                " round mirrors and warm pendant lighting along a polished marble"
                " counter near the window, with brushed brass fixtures and trailing"
                " potted plants arranged on pale floating shelves"
            ],
            [("salon interior", 0.9), ("mirror", 0.58), ("styling chair", 0.55), ("pendant lamp", 0.47)],
        ),
        _element(
            "offer",
            "text",
            ((160, 920), (1760, 1040)),
            [("#2B2B2B", 0.8)],
            [
                "Modern salon studio grand opening, book your styling session today"
                " and enjoy complimentary consultations, refreshments and aftercare"
                " advice from our senior stylists throughout launch week, with early"
                " access slots for newsletter subscribers and a small gift for the"
                " first fifty visitors"
            ],
            z=1,
        ),
        _element(
            "scissors",
            "icon",
            ((1700, 60), (1860, 220)),
            [("#222222", 0.8)],
            [
                "Simple line icon of styling scissors with open blades, even stroke"
                " weight and rounded joints, designed to stay legible at small sizes"
                " against light surfaces, shipped in filled and outlined variants"
                " with a consistent bounding box for pixel perfect alignment"
            ],
            z=2,
        ),
    ],
)

STONE_BANNER = _doc(
    "desk-1",
    "page-0",
    [
        _element(
            "stone-bg",
            "image",
            ((0, 0), (1600, 800)),
            [("#7D7F7D", 0.55), ("#4A4C4A", 0.25), ("#A6A8A5", 0.1), ("#2F312F", 0.06)],
            [
                "Weathered gray stone pattern wall background with natural slate"
                " texture and irregular rock tiles laid in cool muted tones, fine"
                " chisel marks and shallow mortar lines running between the courses"
                " under flat overcast daylight, with faint moss shadows settled"
                " into the deeper joints near the base of the wall"
            ],
            [("stone wall", 0.85), ("slate tile", 0.57), ("mortar seam", 0.38)],
            selected=True,
        ),
        _element(
            "banner-copy",
            "text",
            ((100, 620), (1500, 760)),
            [("#F5F5F0", 0.7)],
            [
                "Timeless stone pattern backgrounds for rustic banner designs, page"
                " headers and hero sections, paired with suggested serif pairings"
                " and ready-made spacing presets, so the same texture family can"
                " carry a whole campaign from landing page hero to printed flyer"
            ],
            z=1,
        ),
        _element(
            "divider",
            "shape",
            ((100, 560), (1500, 580)),
            [("#4A4C4A", 0.4)],
            [
                "Thin horizontal divider line shape with square caps and a one pixel"
                " hairline weight that holds up across retina and standard density"
                " screens without blurring, with optional tapered end caps and a"
                " dotted variant for secondary separations inside dense layouts"
            ],
            z=2,
        ),
    ],
    width=1600.0,
    height=800.0,
)

RED_POSTER = _doc(
    "desk-1",
    "page-0",
    [
        _element(
            "red-bg",
            "image",
            ((0, 0), (1080, 1350)),
            [("#FF0000", 0.6), ("#780000", 0.25), ("#FF5A36", 0.08), ("#3D0000", 0.05)],
            [
                "Bold crimson red gradient backdrop with dramatic studio lighting and"
                " subtle grain texture sweeping across the full frame, deepening toward"
                " the corners with a gentle vignette and a soft speckled overlay,"
                " leaving clean negative space along the upper third for headline"
                " copy and price badges"
            ],
            [("red backdrop", 0.8), ("vignette edge", 0.44), ("speckle texture", 0.36), ("highlight sweep", 0.31)],
        ),
        _element(
            "sale-copy",
            "text",
            ((80, 120), (1000, 360)),
            [("#FFF3E0", 0.8)],
            [
                "Summer clearance mega sale this weekend only, everything must go,"
                " with doorbuster markdowns, bundle pricing and free gift wrapping"
                " at checkout while stocks last, plus extended opening hours on"
                " saturday and sunday and an extra loyalty stamp for every basket"
            ],
            z=1,
        ),
        _element(
            "burst",
            "shape",
            ((700, 1000), (1020, 1320)),
            [("#FF0000", 0.35)],
            [
                "Red starburst promotional sticker shape with jagged edges, a bold"
                " outline and room for a short price callout centered inside the"
                " widest point of the star, supplied with a softer scalloped"
                " alternative and a matching ribbon tail for corner placements"
            ],
            z=2,
        ),
    ],
    width=1080.0,
    height=1350.0,
)

EMPTY_DOC = {"gdrVersion": "desk-1", "pages": []}

GDR_FIXTURES = {
    "listing1.json": LISTING1,
    "coffee_poster.json": COFFEE_POSTER,
    "green_canvas.json": GREEN_CANVAS,
    "salon_flyer.json": SALON_FLYER,
    "stone_banner.json": STONE_BANNER,
    "red_poster.json": RED_POSTER,
    "empty.json": EMPTY_DOC,
}


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

ASSETS = [
    # photos
    ("ph-beans-close", "photo", "roasted coffee beans close-up", ["coffee", "beans"]),
    ("ph-beans-sack", "photo", "burlap sack of green coffee beans at a farmers market stall", ["coffee", "beans", "market"]),
    ("ph-espresso", "photo", "barista pouring a double espresso shot into a ceramic cup", ["coffee", "espresso"]),
    ("ph-roast-drum", "photo", "copper coffee roasting drum tumbling fresh roasted beans in a workshop", ["coffee", "roasting"]),
    ("ph-salon", "photo", "modern salon interior with styling chairs large mirrors and pendant lights", ["salon", "interior"]),
    ("ph-salon-stylist", "photo", "stylist cutting hair in a bright modern salon studio", ["salon", "stylist"]),
    ("ph-veg-octopus", "photo", "fresh vegetables and an octopus on a blue market table", ["vegetables", "octopus"]),
    ("ph-veg-basket", "photo", "basket of fresh vegetables from the garden on a wooden bench", ["vegetables", "basket"]),
    ("ph-red-car", "photo", "a red car parked on a quiet cobblestone street at dusk near the old town square fountain with people walking past shop windows", ["red", "car"]),
    ("ph-green-car", "photo", "a green car parked on a quiet cobblestone street at dusk near the old town square fountain with people walking past shop windows", ["green", "car"]),
    ("ph-city-night", "photo", "city skyline at night with glowing windows and light trails", ["city", "night"]),
    ("ph-beach", "photo", "golden sunset beach with calm waves and scattered seashells", ["beach", "sunset"]),
    ("ph-mountain", "photo", "hikers walking a mountain ridge trail above the morning clouds", ["mountain", "hiking"]),
    ("ph-latte-art", "photo", "latte art rosette poured in a ceramic mug on a cafe counter", ["coffee", "latte"]),
    ("ph-flowers", "photo", "bouquet of tulips and daisies wrapped in kraft paper", ["flowers", "tulips"]),
    ("ph-bread", "photo", "sourdough bread loaves cooling on a bakery rack", ["bakery", "bread"]),
    # backgrounds
    ("bg-stone", "background", "weathered gray stone pattern background with natural slate texture", ["stone", "slate"]),
    ("bg-leaf", "background", "lush green leaf pattern background with layered tropical foliage", ["leaf", "foliage"]),
    ("bg-watercolor", "background", "soft pastel watercolor wash background in blush tones", ["watercolor", "pastel"]),
    ("bg-geometric", "background", "bold geometric pattern background with interlocking triangles", ["geometric"]),
    ("bg-coffee", "background", "dark roasted coffee beans texture background shot from above", ["coffee", "texture"]),
    ("bg-marble", "background", "polished marble background with subtle veining", ["marble"]),
    ("bg-wood", "background", "rustic wooden planks background with warm grain", ["wood", "rustic"]),
    ("bg-gradient", "background", "smooth crimson gradient background fading to deep maroon shade", ["gradient", "warm"]),
    ("bg-bokeh", "background", "golden bokeh lights background for festive designs", ["bokeh", "festive"]),
    ("bg-paper", "background", "recycled paper texture background in soft beige tone", ["paper", "craft"]),
    # icons
    ("ic-star", "icon", "five pointed star icon with clean outline", ["star"]),
    ("ic-heart", "icon", "heart outline icon", ["heart"]),
    ("ic-cart", "icon", "shopping cart line icon", ["cart", "shopping"]),
    ("ic-coffee-cup", "icon", "steaming coffee cup icon in flat style", ["coffee", "cup"]),
    ("ic-scissors", "icon", "styling scissors line icon", ["scissors", "salon"]),
    ("ic-leaf", "icon", "single leaf icon with rounded stem", ["leaf"]),
    ("ic-camera", "icon", "camera icon with simple lens detail", ["camera"]),
    ("ic-music-note", "icon", "music note icon in solid style", ["music", "note"]),
    # shapes
    ("sh-circle", "shape", "simple circle shape with flat fill", ["circle"]),
    ("sh-arrow", "shape", "bold arrow shape pointing right", ["arrow"]),
    ("sh-rect", "shape", "rounded rectangle shape frame", ["rectangle"]),
    ("sh-burst", "shape", "starburst promotional sticker shape with jagged edges", ["burst"]),
    ("sh-divider", "shape", "thin horizontal divider line shape", ["divider"]),
    ("sh-blob", "shape", "organic blob shape with smooth curves", ["blob"]),
    # audio
    ("au-piano", "audio", "calm relaxing piano music loop for soft ambience", ["music", "calm"]),
    ("au-guitar", "audio", "upbeat acoustic guitar music loop", ["music", "guitar"]),
    ("au-rain", "audio", "gentle rain ambience with distant thunder", ["rain", "ambience"]),
    ("au-cafe", "audio", "cozy cafe chatter and espresso machine sounds", ["cafe", "coffee"]),
    # templates
    ("tp-birthday", "template", "birthday card template with balloons and confetti", ["birthday", "card"]),
    ("tp-resume", "template", "clean professional resume template with two columns", ["resume"]),
    ("tp-menu", "template", "cafe menu template with chalkboard styling", ["menu", "cafe"]),
    # logos
    ("lg-roastery", "logo", "vintage coffee roastery logo stamp with bean silhouette", ["coffee", "roastery"]),
    ("lg-leafco", "logo", "minimal leaf logo mark", ["leaf", "minimal"]),
    ("lg-studio", "logo", "geometric studio logo with monogram", ["studio"]),
]


# ---------------------------------------------------------------------------
# Shot bank
# ---------------------------------------------------------------------------

SHOTS = [
    ("photo", "add a photo of a sunset beach", "golden sunset beach with calm waves"),
    ("icon", "add icon of a shopping cart", "shopping cart line icon"),
    ("shape", "add shape of an arrow", "bold arrow shape"),
    ("background", "find watercolor background", "soft watercolor wash background"),
    ("video", "add a clip of city traffic", "timelapse of city traffic at night"),
    ("audio", "add upbeat music", "upbeat pop background music"),
    ("template", "find a birthday card template", "birthday card template with balloons"),
    ("logo", "find a cafe logo", "cafe logo with a coffee cup"),
    ("photo", "find pictures of mountain hiking", "hikers on a mountain trail at sunrise"),
    ("icon", "find a heart icon", "heart outline icon"),
    ("shape", "insert a rounded rectangle shape", "rounded rectangle shape"),
    ("background", "add geometric pattern background", "geometric pattern background"),
    ("video", "find a cooking video", "chef cooking in a bright kitchen"),
    ("audio", "find rain sounds", "gentle rain ambience"),
    ("template", "add a resume template", "clean professional resume template"),
    ("logo", "add a company logo placeholder", "minimal company logo placeholder"),
    ("photo", "find product photos of sneakers", "studio product photo of sneakers on white"),
    ("icon", "add a calendar icon", "calendar grid icon"),
    ("shape", "insert a speech bubble shape", "speech bubble callout shape"),
    ("background", "add night sky background", "night sky with stars background"),
    ("video", "find drone footage of a coastline", "aerial drone footage of a rugged coastline"),
    ("audio", "add cinematic drums", "cinematic percussion underscore"),
    ("template", "find a photo collage template", "grid photo collage template"),
    ("logo", "add a bakery logo", "bakery logo with a wheat sprig"),
    ("photo", "replace the photo with an autumn forest", "autumn forest with golden light"),
    ("icon", "add a location pin icon", "map location pin icon"),
    ("shape", "add a hexagon shape", "flat hexagon tile shape"),
    ("background", "find dark marble background", "dark marble texture background"),
    ("video", "add ocean waves video loop", "slow ocean waves looping clip"),
    ("audio", "add soft jazz music", "soft jazz trio background track"),
    ("template", "find a newsletter template", "two column newsletter template"),
    ("logo", "add a tech startup logo", "abstract tech startup logo mark"),
]


# ---------------------------------------------------------------------------
# Case construction
# ---------------------------------------------------------------------------

# (raw query, gdr fixture, theme for the planner prompt)
CLEAN_POOL = [
    ("find beans", "coffee_poster.json", "a coffee roasting poster"),
    ("add photo of roasted beans", "coffee_poster.json", "a coffee roasting poster"),
    ("replace image with a modern salon", "salon_flyer.json", "a salon opening flyer"),
    ("find stone pattern backgrounds", "stone_banner.json", "a rustic banner"),
    ("find leaf pattern background", "green_canvas.json", "a botanical summer canvas"),
    ("add icon of a star", "green_canvas.json", "a botanical summer canvas"),
    ("add relaxing music", "coffee_poster.json", "a coffee roasting poster"),
    ("add logo", "coffee_poster.json", "a coffee roasting poster"),
    ("add shape of a circle", "green_canvas.json", "a botanical summer canvas"),
    ("find a picture of fresh vegetables", "listing1.json", "a seafood market flyer"),
    ("find a photo of latte art", "coffee_poster.json", "a coffee roasting poster"),
    ("add picture of city at night", "red_poster.json", "a clearance sale poster"),
    ("find watercolor background", "salon_flyer.json", "a salon opening flyer"),
    ("find mountain hiking photo", "green_canvas.json", "a botanical summer canvas"),
]

DISPLACEMENT_QUERY = ("find a car photo", "red_poster.json", "a clearance sale poster")
RECALL_FAULT_QUERY = ("create a deer pattern background", "stone_banner.json", "a rustic banner")
RECALL_FAULT_SUBPROMPT = "deer fawn meadow"
VACUOUS_SUBPROMPT = "antler wildlife sketch"
INTENT_FAULT_SUBPROMPT = "dandelions"

UNRECOVERED_PREFS = ["icon", "photo", "shape", "background", "audio"]


def planner_prompt(theme: str, query: str) -> str:
    return (
        f"The user is working on {theme}. Keep any suggestion consistent with the"
        f" canvas palette, the existing layout, and licensing rules."
        f" Request from the user: {query}."
    )


def faulted_policies(cycle: int) -> list[str]:
    size = cycle % 8
    return [p for p in POLICIES if FAULT_RANK[p] < size]


class CaseBuilder:
    def __init__(self, summaries, stub_fallbacks):
        self.summaries = summaries
        self.fallbacks = stub_fallbacks
        self.cases = []
        self.script = {}
        self.intended = {}  # case_id -> policy -> Outcome
        self._dummy_bundle = PromptBundle(
            policy=PolicyId.ZERO_SHOT,
            system_prompt="",
            shots=(),
            planner_prompt="",
            context_text="",
            scratchpad_requested=False,
            tokens_in=0,
        )

    def heuristic(self, query: str, gdr: str):
        response = stub_complete(
            self._dummy_bundle,
            ScriptTable(),
            self.summaries[gdr],
            case_id="probe",
            query=preprocess(query),
            fallbacks=self.fallbacks,
        )
        return response.subprompt, response.content_type_ranking[0]

    def add_case(self, case_id, query, gdr, theme, expected_sub, expected_type,
                 expect_assets=True, best_asset=None):
        self.cases.append(
            {
                "caseId": case_id,
                "rawQuery": query,
                "plannerPrompt": planner_prompt(theme, query),
                "gdrPath": gdr,
                "expectedSubprompt": expected_sub,
                "expectedContentType": expected_type,
                "expectAssets": expect_assets,
                **({"expectedBestAssetId": best_asset} if best_asset else {}),
            }
        )
        self.intended[case_id] = {p: Outcome.PASS for p in POLICIES}

    def script_for(self, case_id, policies, response):
        table = self.script.setdefault(case_id, {})
        for policy in policies:
            table[policy] = response

    def intend(self, case_id, policies, outcome):
        for policy in policies:
            self.intended[case_id][policy] = outcome

    def clean_case(self, case_id, idx):
        query, gdr, theme = CLEAN_POOL[idx % len(CLEAN_POOL)]
        sub, ctype = self.heuristic(query, gdr)
        best = "ph-beans-close" if query == "find beans" else None
        self.add_case(case_id, query, gdr, theme, sub, ctype, best_asset=best)
        return sub, ctype

    def intent_fault_case(self, case_id, idx, cycle):
        query, gdr, theme = CLEAN_POOL[idx % len(CLEAN_POOL)]
        sub, ctype = self.heuristic(query, gdr)
        assert cosine(embed_text(INTENT_FAULT_SUBPROMPT), embed_text(sub)) < 0.7, sub
        self.add_case(case_id, query, gdr, theme, sub, ctype)
        bad = faulted_policies(cycle)
        self.script_for(
            case_id,
            bad,
            {
                "subprompt": INTENT_FAULT_SUBPROMPT,
                "intentClass": "find",
                "scope": "global",
                "contentTypeRanking": [ctype],
            },
        )
        self.intend(case_id, bad, Outcome.INTENT_FAILURE)

    def recovered_misroute_case(self, case_id, idx, cycle):
        query, gdr, theme = CLEAN_POOL[idx % len(CLEAN_POOL)]
        sub, ctype = self.heuristic(query, gdr)
        assert ctype != "video"
        self.add_case(case_id, query, gdr, theme, sub, ctype)
        bad = faulted_policies(cycle)
        # Misrouted to the empty video partition; the fallback recovers.
        self.script_for(
            case_id,
            bad,
            {
                "subprompt": sub,
                "intentClass": "find",
                "scope": "global",
                "contentTypeRanking": ["video", ctype],
            },
        )

    def unrecovered_misroute_case(self, case_id, idx, cycle):
        query, gdr, theme = CLEAN_POOL[idx % len(CLEAN_POOL)]
        sub, ctype = self.heuristic(query, gdr)
        wrong = [ct for ct in UNRECOVERED_PREFS if ct != ctype][:2]
        self.add_case(case_id, query, gdr, theme, sub, ctype)
        bad = faulted_policies(cycle)
        self.script_for(
            case_id,
            bad,
            {
                "subprompt": sub,
                "intentClass": "find",
                "scope": "global",
                "contentTypeRanking": wrong,
            },
        )
        self.intend(case_id, bad, Outcome.ROUTING_FAILURE)

    def recall_fault_case(self, case_id):
        query, gdr, theme = RECALL_FAULT_QUERY
        self.add_case(case_id, query, gdr, theme, RECALL_FAULT_SUBPROMPT, "background")
        self.script_for(
            case_id,
            POLICIES,
            {
                "subprompt": RECALL_FAULT_SUBPROMPT,
                "intentClass": "add",
                "scope": "global",
                "contentTypeRanking": ["background", "photo"],
            },
        )
        self.intend(case_id, POLICIES, Outcome.RECALL_FAILURE)

    def displacement_case(self, case_id):
        query, gdr, theme = DISPLACEMENT_QUERY
        sub, ctype = self.heuristic(query, gdr)
        assert (sub, ctype) == ("red car", "photo"), (sub, ctype)
        self.add_case(case_id, query, gdr, theme, sub, ctype)
        self.intend(case_id, POLICIES, Outcome.RANKING_FAILURE)

    def vacuous_zero_hit_case(self, case_id):
        query, gdr, theme = RECALL_FAULT_QUERY
        self.add_case(
            case_id, query, gdr, theme, VACUOUS_SUBPROMPT, "background", expect_assets=False
        )
        self.script_for(
            case_id,
            POLICIES,
            {
                "subprompt": VACUOUS_SUBPROMPT,
                "intentClass": "add",
                "scope": "global",
                "contentTypeRanking": ["background", "photo"],
            },
        )

    def invalid_output_case(self, case_id, idx):
        query, gdr, theme = CLEAN_POOL[idx % len(CLEAN_POOL)]
        sub, ctype = self.heuristic(query, gdr)
        self.add_case(case_id, query, gdr, theme, sub, ctype)
        self.script_for(
            case_id,
            POLICIES,
            {"subprompt": "", "contentTypeRanking": ["photo"]},
        )
        self.intend(case_id, POLICIES, Outcome.INTENT_FAILURE)

    def build_cycle_case(self, case_id, i):
        cycle, offset = divmod(i, 20)
        if offset <= 13:
            self.clean_case(case_id, i + cycle)
        elif offset == 14:
            self.intent_fault_case(case_id, i, cycle)
        elif offset == 15:
            self.recovered_misroute_case(case_id, i, cycle)
        elif offset == 16:
            self.unrecovered_misroute_case(case_id, i, cycle)
        elif offset == 17:
            self.recall_fault_case(case_id)
        elif offset == 18:
            self.displacement_case(case_id)
        elif cycle % 2 == 0:
            self.vacuous_zero_hit_case(case_id)
        else:
            self.invalid_output_case(case_id, i)


# ---------------------------------------------------------------------------
# Verification helpers
# ---------------------------------------------------------------------------


def verify_corpus(index):
    for _, _, caption, tags in ASSETS:
        toks = set(tokenize(caption)) | set(tokenize(" ".join(tags)))
        clash = toks & FORBIDDEN_TOKENS
        assert not clash, f"forbidden tokens {clash} in corpus"

    hits = recall(index, "coffee beans", "photo", 5)
    assert hits and hits[0].asset_id == "ph-beans-close", [h.asset_id for h in hits]

    assert recall(index, RECALL_FAULT_SUBPROMPT, "background", 20) == []
    assert recall(index, RECALL_FAULT_SUBPROMPT, "photo", 20) == []
    assert recall(index, VACUOUS_SUBPROMPT, "background", 20) == []
    assert recall(index, VACUOUS_SUBPROMPT, "photo", 20) == []
    assert index.partitions["video"] == ()


def verify_displacement(index, docs):
    doc = docs["red_poster.json"]
    cands = recall(index, "red car", "photo", 20)
    ids = [c.asset_id for c in cands]
    assert "ph-red-car" in ids and "ph-green-car" in ids, ids
    ranked = rerank(cands, doc, "red car", index.assets)
    qvec = embed_text("red car")
    sims = {aid: cosine(qvec, embed_text(index.assets[aid].caption)) for aid, _ in ranked}
    best = max(sims, key=lambda aid: sims[aid])
    assert best == "ph-red-car", sims
    assert ranked[0][0] != "ph-red-car", ranked[:3]


def verify_run(config_path, intended):
    config = load_run_config(config_path)
    report, traces, verdicts = run_evaluation(config)
    mismatches = []
    for verdict in verdicts:
        want = intended[verdict.case_id][verdict.policy.value]
        if verdict.outcome is not want:
            mismatches.append((verdict.case_id, verdict.policy.value, want, verdict.outcome))
    assert not mismatches, mismatches[:10]
    for row in report.policies:
        assert row.routing_with_fallback_rate >= row.routing_success_rate
        assert row.fallback_gain >= 0.0
    return report


# ---------------------------------------------------------------------------
# Main
# ---------------------------------------------------------------------------


def write_config(path, case_file, script_file, parallelism=4):
    config = {
        "policies": POLICIES,
        "corpusPath": "corpus.jsonl",
        "caseFilePath": case_file,
        "shotBankPath": "shot_bank.jsonl",
        "gdrDir": "gdr",
        "scriptPath": script_file,
        "seed": 7,
        "tauIntent": 0.7,
        "thetaRecall": 0.15,
        "alphaFusion": 0.5,
        "rerankWeights": [0.7, 0.15, 0.15],
        "fallbackMap": {k: list(v) for k, v in DEFAULT_FALLBACKS.items()},
        "K": 20,
        "F": 2,
        "clientMode": "stub",
        "parallelism": parallelism,
    }
    path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")


def main():
    (FIXTURES / "gdr").mkdir(parents=True, exist_ok=True)
    GOLDEN.mkdir(parents=True, exist_ok=True)

    docs = {}
    for name, raw in GDR_FIXTURES.items():
        text = json.dumps(raw, indent=2) + "\n"
        (FIXTURES / "gdr" / name).write_text(text, encoding="utf-8")
        docs[name] = parse_gdr(text)

    listing1 = docs["listing1.json"]
    (GOLDEN / "listing1_canonical.json").write_text(serialize_gdr(listing1), "utf-8")
    (GOLDEN / "listing1_context.txt").write_text(serialize_context(listing1), "utf-8")

    with open(FIXTURES / "corpus.jsonl", "w", encoding="utf-8") as fh:
        for aid, ctype, caption, tags in ASSETS:
            fh.write(
                json.dumps(
                    {
                        "id": aid,
                        "contentType": ctype,
                        "caption": caption,
                        "tags": tags,
                        "licensed": True,
                    }
                )
                + "\n"
            )
    index = load_corpus(FIXTURES / "corpus.jsonl")
    assert index.doc_count == 50, index.doc_count
    verify_corpus(index)
    verify_displacement(index, docs)

    with open(FIXTURES / "shot_bank.jsonl", "w", encoding="utf-8") as fh:
        for ctype, query, sub in SHOTS:
            fh.write(
                json.dumps(
                    {"contentType": ctype, "exampleQuery": query, "exampleSubprompt": sub}
                )
                + "\n"
            )
    bank = load_shot_bank_file(FIXTURES / "shot_bank.jsonl")
    assert {s.content_type for s in bank.shots} == set(
        ct for ct, _, _ in SHOTS
    ), "bank must cover every content type"

    summaries = {name: compress_gdr(doc) for name, doc in docs.items()}
    assert summaries["coffee_poster.json"].domain_cues[0] == "coffee", summaries[
        "coffee_poster.json"
    ].domain_cues

    builder = CaseBuilder(summaries, DEFAULT_FALLBACKS)
    for i in range(788):
        builder.build_cycle_case(f"case-{i:04d}", i)
    with open(FIXTURES / "cases_788.jsonl", "w", encoding="utf-8") as fh:
        for case in builder.cases:
            fh.write(json.dumps(case) + "\n")
    (FIXTURES / "script_788.json").write_text(
        json.dumps(builder.script, indent=1) + "\n", encoding="utf-8"
    )
    write_config(FIXTURES / "config_788.json", "cases_788.jsonl", "script_788.json")

    smoke = CaseBuilder(summaries, DEFAULT_FALLBACKS)
    for i in range(20):
        smoke.build_cycle_case(f"smoke-{i:02d}", i + 80)  # cycle 4: all-policy faults
    with open(FIXTURES / "cases_smoke.jsonl", "w", encoding="utf-8") as fh:
        for case in smoke.cases:
            fh.write(json.dumps(case) + "\n")
    (FIXTURES / "script_smoke.json").write_text(
        json.dumps(smoke.script, indent=1) + "\n", encoding="utf-8"
    )
    write_config(FIXTURES / "config_smoke.json", "cases_smoke.jsonl", "script_smoke.json")

    report = verify_run(FIXTURES / "config_788.json", builder.intended)
    verify_run(FIXTURES / "config_smoke.json", smoke.intended)

    outcome_counts = Counter()
    for per_policy in builder.intended.values():
        outcome_counts.update(per_policy.values())
    print("788-case intended outcomes per policy-pair:", dict(outcome_counts))
    for row in report.policies:
        print(
            f"{row.policy.value:20s} intent={row.intent_match_rate:6.2f}"
            f" routing={row.routing_success_rate:6.2f}"
            f" +fb={row.routing_with_fallback_rate:6.2f}"
            f" recall={row.recall_success_rate:6.2f}"
            f" ndcg={row.mean_ndcg5:6.2f}"
            f" overall={row.overall_success_rate:6.2f}"
            f" relCost={row.rel_cost:.3f}"
        )
    print("fixtures written to", FIXTURES)


if __name__ == "__main__":
    main()
