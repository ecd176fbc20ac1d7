"""Deterministic desk-scale disaster-domain corpora.

News and tweets are drawn from disjoint template fills, so the two corpora
are non-parallel.
"""
from __future__ import annotations

import random
from importlib import resources

DISASTERS = ["flood", "cyclone", "earthquake", "landslide", "wildfire", "storm", "blast"]
PLACES = ["peshawar", "dhaka", "puri", "odisha", "kerala", "mumbai", "chennai", "manila",
          "jakarta", "kathmandu", "haiti", "chile", "the coast", "eastern india"]
COUNTS = ["two", "three", "five", "ten", "dozens of", "hundreds of", "at least 20", "more than 100"]
VICTIMS = ["people", "children", "residents", "villagers", "workers", "tourists"]
AGENCIES = ["officials", "police", "the army", "rescue teams", "the red cross", "the government"]
DAYS = ["on monday", "on tuesday", "on friday", "overnight", "on sunday", "early on saturday"]
VERBS = [("killed", "dead"), ("injured", "hurt"), ("evacuated", "evacuated"), ("rescued", "rescued"),
         ("displaced", "displaced")]

NEWS_TEMPLATES = [
    "{count} {victims} were {verb} after a {disaster} hit {place} {day} , {agency} said .",
    "{agency} said {count} {victims} were {verb} in {place} as the {disaster} continued .",
    "the {disaster} in {place} has {verb} {count} {victims} , according to {agency} .",
    "{agency} have confirmed that {count} {victims} were {verb} in {place} {day} .",
    "a powerful {disaster} struck {place} {day} , and {count} {victims} were {verb} .",
]
TWEET_TEMPLATES = [
    "breaking : {count} {short} in {place} {disaster} #{place_tag}{disaster}",
    "{count} {victims} {short} as {disaster} hits {place} . pls pray #prayfor{place_tag}",
    "update : {place} {disaster} , {count} {short} - {agency_short}",
    "omg {disaster} in {place} , {count} {victims} {short} !! #{disaster}",
    "rt @newsdesk : {disaster} hits {place} {day} , {count} {short} #breaking",
]
AGENCY_SHORT = {"officials": "officials", "police": "police", "the army": "army",
                "rescue teams": "rescuers", "the red cross": "redcross", "the government": "govt"}


def _fill(rng: random.Random) -> dict:
    verb, short = rng.choice(VERBS)
    place = rng.choice(PLACES)
    agency = rng.choice(AGENCIES)
    return {
        "count": rng.choice(COUNTS), "victims": rng.choice(VICTIMS), "verb": verb, "short": short,
        "disaster": rng.choice(DISASTERS), "place": place, "place_tag": place.replace(" ", ""),
        "day": rng.choice(DAYS), "agency": agency, "agency_short": AGENCY_SHORT[agency],
    }


def generate_news(n: int, seed: int = 0) -> list[str]:
    rng = random.Random(f"news:{seed}")
    return [rng.choice(NEWS_TEMPLATES).format(**_fill(rng)) for _ in range(n)]


def generate_tweets(n: int, seed: int = 0) -> list[str]:
    rng = random.Random(f"tweets:{seed}")
    return [rng.choice(TWEET_TEMPLATES).format(**_fill(rng)) for _ in range(n)]


def bundled(name: str) -> list[str]:
    """Lines of a corpus file shipped in ``tweet2news/data``."""
    text = resources.files("tweet2news").joinpath("data", name).read_text(encoding="utf-8")
    return [line for line in text.splitlines() if line.strip()]


def bundled_path(name: str) -> str:
    return str(resources.files("tweet2news").joinpath("data", name))
