import random

import pytest

from tweet2news.corpus import generate_news
from tweet2news.corruptor import (CorruptionSpec, CorruptionTally, Corruptor, build_hashtag_pool, corrupt_H,
                                  corrupt_lines, corrupt_word, find_entities, hashtag_entities,
                                  hashtag_entities_counted, inject_random_hashtag, load_paraphrase_table,
                                  paraphrase, spell_noise, spell_noise_flagged)


class FixedIndex(random.Random):
    """randrange always answers ``i``; lets the swap and drop rules be checked exactly."""

    def __init__(self, i):
        super().__init__(0)
        self.i = i

    def randrange(self, *args, **kwargs):
        return self.i


SENT = "three killed as cyclone fani hits the coast of odisha"


def test_spec_validation():
    with pytest.raises(ValueError):
        CorruptionSpec(spell_p=1.5)
    with pytest.raises(ValueError):
        CorruptionSpec(random_hashtag_p=0.2, hashtag_pool=[])
    CorruptionSpec(random_hashtag_p=0.0, hashtag_pool=[])


# ---------------------------------------------------------------- paraphrase


def test_paraphrase_identity_and_determinism():
    assert paraphrase(SENT, 1, synonym_p=0.0, drop_p=0.0) == SENT
    assert paraphrase(SENT, 9) == paraphrase(SENT, 9)


def test_paraphrase_lexicon_forced():
    assert paraphrase("three killed", 0, synonym_p=1.0, drop_p=0.0, lexicon={"killed": "dead"}) == "three dead"


def test_paraphrase_never_empties():
    assert paraphrase("the of a", 0, drop_p=1.0) == "the of a"


def test_paraphrase_table_wins(tmp_path):
    path = tmp_path / "p.tsv"
    path.write_text(f"{SENT}\tthree dead in odisha storm\n")
    table = load_paraphrase_table(path)
    assert paraphrase(SENT, 0, table=table) == "three dead in odisha storm"
    path.write_text("no tab here\n")
    with pytest.raises(ValueError, match=":1:"):
        load_paraphrase_table(path)


# ---------------------------------------------------------------- spelling


@pytest.mark.parametrize("word,out", [("storm", "strm"), ("peshawar", "pshwr")])
def test_devowel_rule(word, out):
    assert corrupt_word(word, "devowel", random.Random(0)) == out


def test_swap_and_drop_rules_exact():
    assert corrupt_word("storm", "swap", FixedIndex(0)) == "tsorm"
    assert corrupt_word("storm", "swap", FixedIndex(3)) == "stomr"
    assert corrupt_word("storm", "drop", FixedIndex(2)) == "strm"
    assert corrupt_word("storm", "drop", FixedIndex(4)) == "stor"


def test_one_letter_word_only_devowels():
    outs = {spell_noise("a", s, spell_p=1.0) for s in range(50)}
    # stripping the only vowel would empty the word, so it is kept
    assert outs == {"a"}
    assert {spell_noise("x", s, spell_p=1.0) for s in range(50)} == {"x"}


def test_non_alphabetic_untouched():
    assert spell_noise("2019", 0, spell_p=1.0) == "2019"


def test_spell_rate_over_100k_words():
    rng = random.Random(0)
    words = ["cyclone", "storm", "damage", "village"] * 25_000
    hits = sum(spell_noise_flagged(w, rng, 0.15)[1] for w in words)
    assert abs(hits / len(words) - 0.15) <= 0.01


def test_spell_zero_is_identity():
    assert all(spell_noise(w, s, 0.0) == w for s, w in enumerate(SENT.split()))


# ---------------------------------------------------------------- hashtags


def test_entity_hashtag_forced():
    assert hashtag_entities("pakistan school attack", 0, p=1.0, gazetteer={"pakistan"}) == "#pakistan school attack"


def test_multiword_entity_joined():
    assert hashtag_entities("storm hits the la trobe valley", 0, p=1.0) == "storm hits the #latrobevalley"


def test_no_entities_identity():
    assert hashtag_entities("a storm hit the town", 0, p=1.0, gazetteer=set()) == "a storm hit the town"


def test_title_case_heuristic_skips_sentence_start():
    assert find_entities("Storm hits New Delhi today".split(), gazetteer=set()) == [(2, 4)]


def test_random_hashtag_rules():
    assert inject_random_hashtag(SENT, ["#news"], 0, p=0.0) == SENT
    for seed in range(20):
        out = inject_random_hashtag(SENT, ["#news"], seed, p=1.0)
        assert out.split().count("#news") == 1
        assert out.replace("#news", "").strip() == SENT


def test_hashtag_pool_top_by_frequency():
    tweets = ["#a #b x", "#b y", "#c #b", "#a", "# not"]
    assert build_hashtag_pool(tweets, top=2) == ["#b", "#a"]


def test_random_hashtag_rate():
    rng = random.Random(1)
    hits = sum(inject_random_hashtag("x y", ["#t"], rng, 0.15) != "x y" for _ in range(10_000))
    assert abs(hits / 10_000 - 0.15) <= 0.02


def test_entity_hashtag_rate():
    rng = random.Random(2)
    found = tagged = 0
    for _ in range(10_000):
        _, f, t = hashtag_entities_counted("floods in peshawar and dhaka", rng, 0.15)
        found, tagged = found + f, tagged + t
    assert found == 20_000
    assert abs(tagged / found - 0.15) <= 0.02


# ---------------------------------------------------------------- H


def test_h_identity_config_is_noop():
    c = Corruptor(CorruptionSpec.identity())
    assert all(c(s, i) == s for i, s in enumerate(generate_news(50, seed=4)))


def test_h_deterministic():
    spec = CorruptionSpec(seed=3)
    assert corrupt_H(SENT, spec, 5) == corrupt_H(SENT, spec, 5)
    outs = {corrupt_H(SENT, spec, s) for s in range(30)}
    assert len(outs) > 1


def test_h_stage_order():
    # paraphrase runs first: the synonym swap happens before the word can be misspelled
    spec = CorruptionSpec(spell_p=1.0, ne_hashtag_p=0.0, random_hashtag_p=0.0, synonym_p=1.0, function_drop_p=0.0)
    c = Corruptor(spec, lexicon={"killed": "dead"})
    out = c("killed", 0)
    assert out != "killed" and sorted(out) != sorted("killed")
    # hashtags come last, so the entity tag is never misspelled
    spec = CorruptionSpec(spell_p=1.0, ne_hashtag_p=1.0, random_hashtag_p=0.0, synonym_p=0.0, function_drop_p=0.0)
    assert Corruptor(spec, gazetteer={"zz"})("zz", 0) == "#zz"


def test_h_never_empties():
    spec = CorruptionSpec(spell_p=1.0, function_drop_p=1.0)
    c = Corruptor(spec)
    for i, s in enumerate(["a", "the of", "i", "o o o"]):
        assert c(s, i).strip()


def test_h_joint_rates_over_10k_sentences():
    c, total = Corruptor(), CorruptionTally()
    for i, line in enumerate(generate_news(10_000, seed=3)):
        total += c.trace(line, i)[1]
    rates = total.rates()
    assert total.sentences == 10_000 and total.entities > 5_000
    for name in ("spell", "entity_hashtag", "random_hashtag"):
        assert abs(rates[name] - 0.15) <= 0.02, (name, rates)


def test_corrupt_lines_pairs():
    lines = generate_news(5, seed=0)
    pairs = corrupt_lines(lines, Corruptor())
    assert [p[1] for p in pairs] == lines
