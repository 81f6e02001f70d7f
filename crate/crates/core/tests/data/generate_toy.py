#!/usr/bin/env python3
"""Regenerates the toy fixtures in this directory.

Writes a topical corpus, a query set drawn from it, one-relevant-document
qrels, and a small dense embedding file in TRETR-EMB 1 format. Output is
fully determined by SEED.
"""

import os
import random
import struct

SEED = 20240611
N_TOPICS = 12
WORDS_PER_TOPIC = 25
DOCS_PER_TOPIC = 30
N_QUERIES = 150
EMB_DIM = 16

HERE = os.path.dirname(os.path.abspath(__file__))
FUNCTION = ["the", "of", "and", "a", "in", "is", "to", "for", "on", "with"]
SYLLABLES = ["ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "pe", "su",
             "da", "gi", "ho", "ju", "be", "ra", "so", "ti", "wu", "xe"]


def pseudo_word(rng, used):
    while True:
        w = "".join(rng.choice(SYLLABLES) for _ in range(rng.randint(2, 3)))
        if w not in used:
            used.add(w)
            return w


def zipf_pick(rng, words, s=1.1):
    weights = [1.0 / (i + 1) ** s for i in range(len(words))]
    return rng.choices(words, weights=weights, k=1)[0]


def main():
    rng = random.Random(SEED)
    used = set(FUNCTION)
    topics = [[pseudo_word(rng, used) for _ in range(WORDS_PER_TOPIC)] for _ in range(N_TOPICS)]
    general = [pseudo_word(rng, used) for _ in range(40)]

    docs = []
    for t, vocab in enumerate(topics):
        for j in range(DOCS_PER_TOPIC):
            length = rng.randint(20, 60)
            tokens = ["the"]
            for _ in range(length - 1):
                r = rng.random()
                if r < 0.55:
                    tokens.append(zipf_pick(rng, vocab))
                elif r < 0.80:
                    tokens.append(zipf_pick(rng, general))
                else:
                    tokens.append(rng.choice(FUNCTION))
            docs.append((f"d{t:02d}-{j:03d}", t, tokens))
    rng.shuffle(docs)

    with open(os.path.join(HERE, "toy_corpus.tsv"), "w") as f:
        for doc_id, _, tokens in docs:
            text = " ".join(tokens)
            f.write(f"{doc_id}\t{text[0].upper()}{text[1:]}.\n")

    by_topic = {}
    for doc_id, t, tokens in docs:
        by_topic.setdefault(t, []).append((doc_id, tokens))

    queries, qrels, topic_of = [], [], {}
    for i in range(N_QUERIES):
        t = rng.randrange(N_TOPICS)
        source_id, tokens = rng.choice(by_topic[t])
        content = [w for w in tokens if w in topics[t]]
        picked = []
        for _ in range(rng.randint(2, 4)):
            w = rng.choice(content)
            if w not in picked:
                picked.append(w)
        if rng.random() < 0.7:
            text = "what is the " + " ".join(picked)
        else:
            text = " ".join(picked)
        qid = f"q{i:03d}"
        queries.append((qid, text))
        topic_of[qid] = t
        qrels.append((qid, source_id, 1))
        if rng.random() < 0.2:
            other = rng.choice([d for d, _ in by_topic[t] if d != source_id])
            qrels.append((qid, other, 2))

    with open(os.path.join(HERE, "toy_queries.tsv"), "w") as f:
        for qid, text in queries:
            f.write(f"{qid}\t{text}\n")
    with open(os.path.join(HERE, "toy_qrels.txt"), "w") as f:
        for qid, doc_id, grade in qrels:
            f.write(f"{qid} 0 {doc_id} {grade}\n")

    centers = [[rng.gauss(0, 1) for _ in range(EMB_DIM)] for _ in range(N_TOPICS)]
    with open(os.path.join(HERE, "toy_queries.emb"), "wb") as f:
        f.write(f"TRETR-EMB 1 {len(queries)} {EMB_DIM} # synthetic topic centers plus noise\n".encode())
        for qid, _ in queries:
            f.write(f"{qid}\n".encode())
        for qid, _ in queries:
            c = centers[topic_of[qid]]
            f.write(struct.pack(f"<{EMB_DIM}f", *[x + rng.gauss(0, 0.3) for x in c]))


if __name__ == "__main__":
    main()
