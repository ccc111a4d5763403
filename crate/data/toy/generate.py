"""Regenerates the toy corpus. Output is committed; rerun only to change it."""

import json
import random
import re

rng = random.Random(20240611)

TOWNS = ["Arden", "Blackmere", "Corvale", "Dunmore", "Elsworth"]
FIRST = ["Mira", "Tobias", "Ilse", "Rowan", "Greta", "Caspar", "Nell", "Osric", "Wren", "Alma"]
LAST = ["Holt", "Fenwick", "Marlow", "Ashby", "Quill", "Thorne", "Brandt", "Oakes", "Pryce", "Vance"]
GOODS = ["wool", "copper", "salted fish", "barley", "glass beads", "cider", "slate", "honey"]
RIVERS = ["Lune", "Tamsin", "Orrin", "Vell", "Kestry"]
SEASONS = ["spring", "summer", "autumn", "winter"]
FILLER = [
    "The market square fills with carts at dawn and empties by noon.",
    "Children chase gulls along the harbour wall while their parents mend nets.",
    "Travellers remark on the smell of woodsmoke that hangs over the lower streets.",
    "Most houses are built from grey stone quarried in the hills to the north.",
    "The old chapel bell is rung twice a day, at first light and at dusk.",
    "Rain arrives from the west and rarely stays longer than an afternoon.",
    "Merchants argue loudly over prices but settle every dispute with a handshake.",
    "A narrow footbridge links the mill to the orchards on the far bank.",
    "In the evenings the tavern hosts fiddlers who play until the candles fail.",
    "The council meets in a timber hall whose roof leaks in heavy storms.",
    "Farmers bring their sheep down from the high pastures before the first frost.",
    "Lanterns line the main road so that late carts can find their way home.",
]


def person():
    return f"{rng.choice(FIRST)} {rng.choice(LAST)}"


def town_doc(i, town):
    keeper, founder, baker = person(), person(), person()
    good, river, season = rng.choice(GOODS), RIVERS[i], rng.choice(SEASONS)
    year = rng.randint(1120, 1480)
    facts = [
        f"The lighthouse keeper of {town} is named {keeper}.",
        f"{town} was founded in the year {year} by {founder}.",
        f"The chief export of {town} is {good}.",
        f"The river {river} runs through the centre of {town}.",
        f"Every {season} the people of {town} hold a lantern festival.",
        f"The best bread in {town} is baked by {baker}.",
    ]
    sentences = []
    while sum(len(re.findall(r"\w+|[^\w\s]", s)) for s in sentences) < 1900:
        sentences.append(rng.choice(FILLER))
    for f in facts:
        sentences.insert(rng.randrange(len(sentences) + 1), f)
    paragraphs = [" ".join(sentences[k : k + 6]) for k in range(0, len(sentences), 6)]
    text = "\n\n".join(paragraphs) + "\n"
    qa = [
        (f"Who is the lighthouse keeper of {town}?", keeper),
        (f"What is the chief export of {town}?", good),
        (f"Which river runs through {town}?", river),
        (f"Who founded {town}?", founder),
        (f"In which season is the lantern festival of {town} held?", season),
    ]
    return text, qa


docs, examples = [], []
for i, town in enumerate(TOWNS):
    text, qa = town_doc(i, town)
    doc_id = town.lower()
    docs.append({"doc_id": doc_id, "text": text})
    for k, (q, a) in enumerate(rng.sample(qa, 2)):
        examples.append({"id": f"{doc_id}-{k}", "doc_id": doc_id, "query": q, "answers": [a]})

with open("corpus.jsonl", "w") as f:
    for d in docs:
        f.write(json.dumps(d) + "\n")
with open("dataset.jsonl", "w") as f:
    for e in examples:
        f.write(json.dumps(e) + "\n")
