"""Author the scripted fixture sources under fixtures/.

Writes items, scripted completions, mock tool worlds and run configs for
figure1/, colorado/ and hotpot-mini-20/source/. The replay bundle in
hotpot-mini-20/ is recorded from the scripted source with the CLI (see
scripts/record_replay.sh) and then frozen.
"""
import json
import math
import os
import re

ROOT = os.path.join(os.path.dirname(__file__), "..", "fixtures")
FILLER = -0.05
TOKEN = re.compile(r"\s*(?:\w+|[^\w\s])|\s+")


def tokenize(text):
    toks = TOKEN.findall(text)
    assert "".join(toks) == text, text
    return toks


def entry(ep, stage, step, text, lps=None, attempt=0, sample=0):
    toks = tokenize(text)
    lps = lps if lps is not None else [FILLER] * len(toks)
    assert len(lps) == len(toks), (text, toks, lps)
    return {"episode": ep, "stage": stage, "step": step, "attempt": attempt, "sample": sample,
            "text": text, "token_logprobs": lps}


def spanned(ep, stage, step, prefix, answer, answer_lps, suffix=""):
    a = tokenize(answer)
    assert len(a) == len(answer_lps), (answer, a)
    text = prefix + answer + suffix
    lps = [FILLER] * len(tokenize(prefix)) + list(answer_lps) + [FILLER] * len(tokenize(suffix))
    return entry(ep, stage, step, text, lps)


def base(ep, thought, answer, lps):
    return spanned(ep, "base", 0, f"Thought: {thought}\nAnswer:", f" {answer}", lps)


def step(ep, i, thought, action):
    return entry(ep, "tool_loop", i, f" {thought}\nAction {i}: {action}")


def finish(ep, i, thought, answer, lps):
    return spanned(ep, "tool_loop", i, f" {thought}\nAction {i}: Finish[", answer, lps, "]")


def item(id_, question, gold, dataset="hotpotqa"):
    return {"id": id_, "question": question, "gold": gold, "dataset": dataset}


def write_jsonl(path, rows):
    with open(path, "w") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n")


def write_json(path, value):
    with open(path, "w") as f:
        json.dump(value, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")


def entropy(lps):
    m = max(lps)
    ex = [math.exp(p - m) for p in lps]
    s = sum(ex)
    z = [e / s for e in ex]
    return -sum(p * math.log(p) for p in z if p > 0)


def figure1():
    d = os.path.join(ROOT, "figure1")
    os.makedirs(d, exist_ok=True)
    items = [
        item("a", "Milhouse, the Simpsons character, was named by Matt Groening after who?", "Richard Nixon"),
        item("b", "Which documentary is about Finnish rock groups, Adam Clayton Powell or The Saimaa Gesture?",
             "The Saimaa Gesture"),
        item("c", "What profession does Nicholas Ray and Elia Kazan have in common?", "director, screenwriter, actor"),
    ]
    script = [
        base("a", "Milhouse was named after U.S. president Richard Nixon.", "Richard Nixon", [-0.05, -4.0]),
        base("b", "Adam Clayton Powell was a politician.", "Adam Clayton Powell", [-0.4, -0.4, -0.4]),
        step("b", 1, "I need to search Adam Clayton Powell and The Saimaa Gesture.", "Search[Adam Clayton Powell]"),
        step("b", 2, "To find the documentary, I can search The Saimaa Gesture.", "Search[The Saimaa Gesture]"),
        finish("b", 3, "The Saimaa Gesture is about three Finnish rock groups.", "The Saimaa Gesture",
               [-0.01, -3.0, -5.0]),
        base("c", "Both are directors.", "director", [-0.9]),
        step("c", 1, "I need to search Nicholas Ray.", "Search[Nicholas Ray]"),
        step("c", 2, "Now search Elia Kazan.", "Search[Elia Kazan]"),
        finish("c", 3, "Both are directors and screenwriters.", "director and screenwriter", [-0.5, -0.5, -0.5]),
    ]
    tools = {
        "pages": {
            "The Saimaa Gesture": "The Saimaa Gesture (Finnish: Saimaa-ilmiö) is a 1981 film by Finnish directors "
                                  "Aki and Mika Kaurismäki. It is a documentary of three Finnish rock groups aboard "
                                  "the steamboat SS Heinävesi on their tour around Lake Saimaa.",
            "Nicholas Ray": "Nicholas Ray (born Raymond Nicholas Kienzle Jr., August 7, 1911 - June 16, 1979) was an "
                            "American film director, screenwriter, and actor best known for the 1955 film Rebel "
                            "Without a Cause.",
            "Elia Kazan": "Elia Kazan was an American film and theatre director, producer, screenwriter and actor.",
        },
        "suggestions": {
            "Adam Clayton Powell": ["Adam Clayton Powell III", "Seventh Avenue (Manhattan)",
                                    "Adam Clayton Powell Jr. State Office Building"],
        },
    }
    profile = {"estimator": "entropy", "threshold": {"method": "max"}, "tau": 0.5, "set_size": 0,
               "weight_scope": "sequence"}
    config = {
        "dataset": {"kind": "hotpotqa", "path": "items.jsonl"},
        "mode": "uala-s",
        "profile": "profile.json",
        "oracle": "simulated",
        "provider": {"kind": "scripted", "script": "script.jsonl"},
        "tools": {"kind": "mock", "path": "tools.json"},
        "workers": 1,
    }
    write_jsonl(os.path.join(d, "items.jsonl"), items)
    write_jsonl(os.path.join(d, "script.jsonl"), script)
    write_json(os.path.join(d, "tools.json"), tools)
    write_json(os.path.join(d, "profile.json"), profile)
    write_json(os.path.join(d, "config.json"), config)


def colorado():
    d = os.path.join(ROOT, "colorado")
    os.makedirs(d, exist_ok=True)
    ep = "colorado"
    items = [item(ep, "What is the elevation range for the area that the eastern sector of the Colorado orogeny "
                      "extends into?", "1,800 to 7,000 ft")]
    steps = [
        ("I need to search Colorado orogeny, find the area that the eastern sector of the Colorado orogeny extends "
         "into, then find the elevation range of the area.", "Search[Colorado orogeny]"),
        ("It does not mention the eastern sector. So I need to look up eastern sector.", "Lookup[eastern sector]"),
        ("The eastern sector of Colorado orogeny extends into the High Plains. So I need to search High Plains and "
         "find its elevation range.", "Search[High Plains]"),
        ("High Plains refers to one of two distinct land regions. I need to instead search High Plains "
         "(United States).", "Search[High Plains (United States)]"),
    ]
    script = [step(ep, i + 1, t, a) for i, (t, a) in enumerate(steps)]
    script.append(finish(ep, 5, "High Plains rise in elevation from around 1,800 to 7,000 ft, so the answer is "
                                "1,800 to 7,000 ft.", "1,800 to 7,000 ft", [-0.1] * 8))
    tools = {"pages": {
        "Colorado orogeny": "The Colorado orogeny was an episode of mountain building (an orogeny) in Colorado and "
                            "surrounding areas. This took place from 1780 to 1650 million years ago (Mya), during "
                            "the Paleoproterozoic (Statherian Period). The eastern sector extends into the High "
                            "Plains and is called the Central Plains orogeny.",
        "High Plains": "High Plains refers to one of two distinct land regions:",
        "High Plains (United States)": "The High Plains are a subregion of the Great Plains. From east to west, the "
                                       "High Plains rise in elevation from around 1,800 to 7,000 ft (550 to "
                                       "2,130 m).[3]",
    }}
    config = {
        "dataset": {"kind": "hotpotqa", "path": "items.jsonl"},
        "mode": "react",
        "provider": {"kind": "scripted", "script": "script.jsonl"},
        "tools": {"kind": "mock", "path": "tools.json"},
        "workers": 1,
    }
    write_jsonl(os.path.join(d, "items.jsonl"), items)
    write_jsonl(os.path.join(d, "script.jsonl"), script)
    write_json(os.path.join(d, "tools.json"), tools)
    write_json(os.path.join(d, "config.json"), config)


# Training split: (id, question, gold, produced answer, answer log-probs).
TRAIN = [
    ("t01", "Which river flows through the city of Florence?", "Arno", "Arno", [-0.02]),
    ("t02", "Who composed the opera Carmen?", "Georges Bizet", "Georges Bizet", [-0.1, -0.3]),
    ("t03", "In which country is the ancient city of Petra located?", "Jordan", "Jordan", [-0.08]),
    ("t04", "Which element has the chemical symbol Fe?", "iron", "iron", [-0.01]),
    ("t05", "Who painted The Garden of Earthly Delights?", "Hieronymus Bosch", "Hieronymus Bosch", [-0.2, -1.4]),
    ("t06", "What is the capital of the state where the Everglades are located?", "Tallahassee", "Miami", [-0.9]),
    ("t07", "Which author wrote the novel that the film Blade Runner is based on?", "Philip K. Dick",
     "Philip K. Dick", [-0.3, -0.5, -0.2, -0.9]),
    ("t08", "The band Radiohead formed in which English town?", "Abingdon", "Oxford", [-1.1]),
    ("t09", "Who directed the film in which Sean Connery first played James Bond?", "Terence Young",
     "Terence Young", [-0.6, -0.6]),
    ("t10", "What is the name of the ocean current that warms western Europe?", "Gulf Stream", "Gulf Stream",
     [-0.05, -1.2]),
    ("t11", "Which playwright wrote Waiting for Godot?", "Samuel Beckett", "Samuel Beckett", [-0.4, -0.7]),
    ("t12", "The Treaty of Westphalia ended which war?", "Thirty Years' War", "Eighty Years' War",
     [-1.5, -1.0, -0.7, -0.6]),
]

# Evaluation split. `base` is (answer, log-probs); `tool` is a list of
# (thought, action) steps followed by either ("finish", thought, answer,
# log-probs) or ("exhaust",) when the loop runs out of steps.
EVAL = [
    dict(id="h01", q="Which city hosted the Summer Olympics in the year the Berlin Wall fell?", gold="Seoul",
         base=("Seoul", [-0.03]),
         tool=[("I need to search Berlin Wall.", "Search[Berlin Wall]"),
               ("finish", "The Berlin Wall fell in 1989, and the 1988 Games were in Seoul.", "Seoul", [-0.2])]),
    dict(id="h02", q="What nationality was the architect of the Sydney Opera House?", gold="Danish",
         base=("Danish", [-0.04]),
         tool=[("I need to search Sydney Opera House.", "Search[Sydney Opera House]"),
               ("finish", "It was designed by Jørn Utzon, a Danish architect.", "Danish", [-0.1])]),
    dict(id="h03", q="The composer of The Planets taught at which London school?", gold="St Paul's Girls' School",
         base=("Royal College of Music", [-0.6, -0.6, -0.6, -0.6]),
         tool=[("I need to search The Planets.", "Search[The Planets]"),
               ("The Planets is by Gustav Holst. I need to search Gustav Holst.", "Search[Gustav Holst]"),
               ("finish", "Holst taught at St Paul's Girls' School.", "St Paul's Girls' School",
                [-0.01, -4.0, -4.0, -4.0, -4.0, -4.0, -4.0])]),
    dict(id="h04", q="Which mountain range separates the two countries that share Lake Titicaca?", gold="Andes",
         base=("Andes", [-0.05]),
         tool=[("I need to search Lake Titicaca.", "Search[Lake Titicaca]"),
               ("finish", "Lake Titicaca lies in the Andes.", "Andes", [-0.1])]),
    dict(id="h05", q="Who founded the company that makes the PlayStation?", gold="Masaru Ibuka",
         base=("Akio Morita", [-0.7, -0.7]),
         tool=[("I need to search PlayStation.", "Search[PlayStation]"),
               ("The PlayStation is made by Sony. I need to search Sony.", "Search[Sony]"),
               ("finish", "Sony was founded by Masaru Ibuka and Akio Morita.", "Masaru Ibuka and Akio Morita",
                [-0.3, -0.3, -0.3, -0.3, -0.3])]),
    dict(id="h06", q="In what year was the university attended by the author of Brideshead Revisited founded?",
         gold="1096", base=("1096", [-0.02]),
         tool=[("I need to search Brideshead Revisited.", "Search[Brideshead Revisited]"),
               ("finish", "Evelyn Waugh attended Oxford, founded around 1096.", "1096", [-0.05])]),
    dict(id="h07", q="Which planet is named after the Roman god whose Greek counterpart is Ares?", gold="Mars",
         base=("Mars", [-1.9]),
         tool=[("I need to search Ares.", "Search[Ares]"),
               ("Ares corresponds to Mars. The planet is Mars.", "Lookup[Roman]"),
               ("finish", "The Roman counterpart is Mars.", "Mars", [-0.02])]),
    dict(id="h08", q="The inventor of the telephone was born in which city?", gold="Edinburgh",
         base=("Boston", [-2.3]),
         tool=[("I need to search Alexander Graham Bell.", "Search[Alexander Graham Bell]"),
               ("finish", "Bell was born in Edinburgh.", "Edinburgh", [-0.05])]),
    dict(id="h09", q="What is the official language of the country where the Atacama Desert is?", gold="Spanish",
         base=("Spanish", [-0.01]),
         tool=[("I need to search Atacama Desert.", "Search[Atacama Desert]"),
               ("finish", "The Atacama is in Chile, where Spanish is spoken.", "Spanish", [-0.05])]),
    dict(id="h10", q="Which band released the album on which the song Paranoid Android appears?", gold="Radiohead",
         base=("Radio Head band", [-0.8, -0.8, -0.8]),
         tool=[("I need to search Paranoid Android.", "Search[Paranoid Android]"),
               ("I should search the album.", "Search[OK Computer album]"),
               ("Let me try the band directly.", "Search[Radio Head band]"),
               ("Still nothing. Search again.", "Search[Paranoid Android song]"),
               ("Keep looking.", "Search[Paranoid Android single]"),
               ("Keep looking.", "Search[Paranoid Android 1997]"),
               ("Keep looking.", "Search[Paranoid Android band]"),
               ("exhaust",)]),
    dict(id="h11", q="Who wrote the novel on which the film The Shining was based?", gold="Stephen King",
         base=("Stephen King", [-0.02, -3.5]),
         tool=[("I need to search The Shining.", "Search[The Shining]"),
               ("finish", "The Shining is a Stephen King novel.", "Stephen King", [-0.02, -3.0])]),
    dict(id="h12", q="Which sea does the river that flows through Vienna empty into?", gold="Black Sea",
         base=("the Adriatic Sea", [-0.9, -0.9, -0.9]),
         tool=[("I need to search Vienna.", "Search[Vienna]"),
               ("Vienna is on the Danube. I need to search Danube.", "Search[Danube]"),
               ("finish", "The Danube flows into the Black Sea.", "Black Sea", [-0.05, -3.0])]),
    dict(id="h13", q="The first woman to win a Nobel Prize was born in which city?", gold="Warsaw",
         base=("Paris", [-2.6]),
         tool=[("I need to search Marie Curie.", "Search[Marie Curie]"),
               ("finish", "Marie Curie was born in Warsaw or Kraków.", "Warsaw or Krakow", [-0.9, -0.9, -0.9])]),
    dict(id="h14", q="What instrument did the leader of the Duke Ellington Orchestra play?", gold="piano",
         base=("piano", [-0.03]),
         tool=[("I need to search Duke Ellington.", "Search[Duke Ellington]"),
               ("finish", "Ellington played piano.", "piano", [-0.05])]),
    dict(id="h15", q="In which country was the director of Spirited Away born?", gold="Japan",
         base=("Japan", [-0.06]),
         tool=[("I need to search Spirited Away.", "Search[Spirited Away]"),
               ("finish", "Hayao Miyazaki was born in Japan.", "Japan", [-0.05])]),
    dict(id="h16", q="How many moons does the planet with the Great Red Spot have according to its article?",
         gold="95", base=("79 known moons", [-1.0, -1.0, -1.0]),
         tool=[("I need to search Jupiter.", "Search[Jupiter]"),
               ("I need the number of moons.", "Lookup[moons]"),
               ("finish", "Jupiter has 95 moons.", "95", [-0.1])]),
    dict(id="h17", q="Which city is home to the museum that holds The Night Watch?", gold="Amsterdam",
         base=("Amsterdam", [-0.04]),
         tool=[("I need to search The Night Watch.", "Search[The Night Watch]"),
               ("finish", "The Night Watch is in the Rijksmuseum in Amsterdam.", "Amsterdam", [-0.05])]),
    dict(id="h18", q="The physicist who proposed the uncertainty principle was born in which city?", gold="Würzburg",
         base=("Munich", [-1.6]),
         tool=[("I need to search Werner Heisenberg.", "Search[Werner Heisenberg]"),
               ("finish", "Heisenberg was born in Würzburg.", "Würzburg", [-0.05])]),
    dict(id="h19", q="What is the currency of the country whose capital is Hanoi?", gold="dong",
         base=("dong", [-1.2]),
         tool=[("I need to search Hanoi.", "Search[Hanoi]"),
               ("Hanoi is the capital of Vietnam.", "Search[Vietnam]"),
               ("Keep looking.", "Search[Vietnamese currency]"),
               ("Keep looking.", "Search[Vietnam money]"),
               ("Keep looking.", "Search[Hanoi currency]"),
               ("Keep looking.", "Search[Vietnam economy]"),
               ("Keep looking.", "Search[Vietnam bank]"),
               ("exhaust",)]),
    dict(id="h20", q="Which ocean lies to the west of the country where the Taj Mahal is?", gold="Arabian Sea",
         base=("Arabian Sea", [-0.1, -2.5]),
         tool=[("I need to search Taj Mahal.", "Search[Taj Mahal]"),
               ("finish", "India borders the Arabian Sea to the west.", "Arabian Sea", [-0.1, -2.5])]),
]

WORLD = {
    "Berlin Wall": "The Berlin Wall was a guarded concrete barrier that divided Berlin from 1961 to 1989. "
                   "It fell on 9 November 1989.",
    "Sydney Opera House": "The Sydney Opera House is a performing arts centre in Sydney. It was designed by "
                          "Danish architect Jørn Utzon.",
    "The Planets": "The Planets is a seven-movement orchestral suite by the English composer Gustav Holst.",
    "Gustav Holst": "Gustav Holst was an English composer. He was music master at St Paul's Girls' School "
                    "from 1905 to 1934.",
    "Lake Titicaca": "Lake Titicaca is a large freshwater lake in the Andes on the border of Bolivia and Peru.",
    "PlayStation": "PlayStation is a video gaming brand owned by Sony Interactive Entertainment.",
    "Sony": "Sony Group Corporation was founded in 1946 by Masaru Ibuka and Akio Morita.",
    "Brideshead Revisited": "Brideshead Revisited is a novel by Evelyn Waugh, who studied at the University "
                            "of Oxford. Teaching at Oxford existed in some form as early as 1096.",
    "Ares": "Ares is the Greek god of war. His Roman counterpart is Mars.",
    "Alexander Graham Bell": "Alexander Graham Bell was a Scottish-born inventor. He was born in Edinburgh "
                             "in 1847.",
    "Atacama Desert": "The Atacama Desert is a desert plateau in northern Chile. Spanish is the official "
                      "language of Chile.",
    "Paranoid Android": "Paranoid Android is a song by the English rock band.",
    "The Shining": "The Shining is a 1977 horror novel by American author Stephen King.",
    "Vienna": "Vienna is the capital of Austria. It lies on the Danube.",
    "Danube": "The Danube flows through Central and Southeastern Europe into the Black Sea.",
    "Marie Curie": "Marie Curie was a Polish and naturalised-French physicist. She was born in Warsaw.",
    "Duke Ellington": "Duke Ellington was an American jazz pianist, composer and leader of his eponymous "
                      "jazz orchestra.",
    "Spirited Away": "Spirited Away is a 2001 Japanese animated film written and directed by Hayao Miyazaki, "
                     "who was born in Tokyo, Japan.",
    "Jupiter": "Jupiter is the fifth planet from the Sun. Its Great Red Spot is a giant storm. Jupiter has "
               "95 moons with confirmed orbits.",
    "The Night Watch": "The Night Watch is a 1642 painting by Rembrandt. It is in the collection of the "
                       "Rijksmuseum in Amsterdam.",
    "Werner Heisenberg": "Werner Heisenberg was a German theoretical physicist born in Würzburg.",
    "Hanoi": "Hanoi is the capital of Vietnam.",
    "Vietnam": "Vietnam is a country in Southeast Asia.",
    "Taj Mahal": "The Taj Mahal is an ivory-white marble mausoleum in Agra, India.",
}


def hotpot_mini():
    d = os.path.join(ROOT, "hotpot-mini-20", "source")
    os.makedirs(d, exist_ok=True)
    train = [item(i, q, g) for i, q, g, _, _ in TRAIN]
    script = [base(i, "Let me think step by step.", a, lps) for i, _, _, a, lps in TRAIN]
    items = []
    for e in EVAL:
        ep = e["id"]
        items.append(item(ep, e["q"], e["gold"]))
        answer, lps = e["base"]
        script.append(base(ep, "Let me think step by step.", answer, lps))
        n = 0
        for s in e["tool"]:
            n += 1
            if s[0] == "finish":
                script.append(finish(ep, n, s[1], s[2], s[3]))
            elif s[0] != "exhaust":
                script.append(step(ep, n, s[0], s[1]))
    tools = {"pages": WORLD}
    common = {
        "dataset": {"kind": "hotpotqa", "path": "items.jsonl"},
        "mode": "uala-s",
        "estimator": "entropy",
        "threshold": {"method": "quantile", "q": 0.9},
        "profile": "profile.json",
        "backoff": True,
        "oracle": "simulated",
        "workers": 4,
        "seed": 0,
    }
    source = dict(common, train={"kind": "hotpotqa", "path": "train.jsonl"},
                  provider={"kind": "scripted", "script": "script.jsonl"},
                  tools={"kind": "mock", "path": "tools.json"})
    write_jsonl(os.path.join(d, "train.jsonl"), train)
    write_jsonl(os.path.join(d, "items.jsonl"), items)
    write_jsonl(os.path.join(d, "script.jsonl"), script)
    write_json(os.path.join(d, "tools.json"), tools)
    write_json(os.path.join(d, "config.json"), source)
    replay = dict(common, provider={"kind": "replay", "completions": "completions.jsonl"},
                  tools={"kind": "replay", "path": "tools.jsonl"})
    write_json(os.path.join(ROOT, "hotpot-mini-20", "config.json"), replay)
    correct = sorted(entropy(lps) if len(lps) > 1 else abs(lps[0])
                     for _, _, g, a, lps in TRAIN if a == g)
    print("calibration values:", [round(v, 4) for v in correct])


if __name__ == "__main__":
    figure1()
    colorado()
    hotpot_mini()
