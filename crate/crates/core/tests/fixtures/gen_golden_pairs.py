# Independent reference for the 28-value pair feature vector.
# Reads the shipped data files, writes golden.vec and golden_pairs.json.
import ipaddress
import json
import math
import re
from pathlib import Path

import numpy as np
from nltk.stem.porter import PorterStemmer
from scipy.spatial import distance


def jaccard(x, y):
    # coordinate-disagreement form; scipy >= 1.15 switched to boolean semantics
    nonzero = (x != 0) | (y != 0)
    b = nonzero.sum()
    return float(((x != y) & nonzero).sum() / b) if b else 0.0
from scipy.stats import kurtosis, skew

HERE = Path(__file__).parent
DATA = HERE.parent.parent / "data"
STOP = set(DATA.joinpath("stopwords_en.txt").read_text().split())
SYN = dict(l.split("\t") for l in DATA.joinpath("synonyms_sample.tsv").read_text().splitlines() if l)
LEX = dict(l.split("\t") for l in DATA.joinpath("pos_lexicon.tsv").read_text().splitlines() if l)
PORTER = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)

WORD = set("abcdefghijklmnopqrstuvwxyz0123456789_")


def bounded(s, start, end, bad_before, bad_after):
    if start > 0 and s[start - 1] in bad_before:
        return False
    if end < len(s) and s[end] in bad_after:
        return False
    return True


def sub_checked(pattern, s, ok):
    out, pos = [], 0
    i = 0
    while True:
        m = re.compile(pattern).search(s, i)
        if not m:
            break
        span = ok(s, m.start(), m.end())
        if span is None:
            i = m.start() + 1
            continue
        a, b = span
        out.append(s[pos:a])
        out.append(None)
        pos = b
        i = b
    out.append(s[pos:])
    return out


def replace(pattern, s, ok, word):
    parts = sub_checked(pattern, s, ok)
    return "".join(word if p is None else p for p in parts)


def mac_ok(sep):
    def ok(s, a, b):
        bad = WORD | {sep}
        return (a, b) if bounded(s, a, b, bad, bad) else None
    return ok


def ipv6_ok(s, a, b):
    cand = s[a:b]
    while cand.endswith("."):
        cand = cand[:-1]
    b = a + len(cand)
    if "::" not in cand and cand.count(":") < 7:
        return None
    if not bounded(s, a, b, WORD, WORD):
        return None
    try:
        ipaddress.IPv6Address(cand)
    except ValueError:
        return None
    return (a, b)


def ipv4_ok(s, a, b):
    if a > 0 and s[a - 1] in (WORD | {"."}):
        return None
    if b < len(s):
        if s[b] in WORD:
            return None
        if s[b] == "." and b + 1 < len(s) and s[b + 1] in "0123456789":
            return None
    return (a, b)


def replace_addresses(s):
    s = replace(r"[0-9a-f]{2}(?::[0-9a-f]{2}){5}", s, mac_ok(":"), "address")
    s = replace(r"[0-9a-f]{2}(?:-[0-9a-f]{2}){5}", s, mac_ok("-"), "address")
    s = replace(r"[0-9a-f:.]*:[0-9a-f:.]*", s, ipv6_ok, "address")
    s = replace(r"[0-9]{1,3}(?:\.[0-9]{1,3}){3}", s, ipv4_ok, "address")
    return s


PATH_BEFORE = WORD | set("./:\\~-")
SEG = r"[a-z0-9._~+\-]+"


def path_ok(s, a, b):
    while b > a and s[b - 1] == ".":
        b -= 1
    if a > 0 and s[a - 1] in PATH_BEFORE:
        return None
    return (a, b)


def replace_filepaths(s):
    s = replace(r"/" + SEG + r"(?:/" + SEG + r")+/?", s, path_ok, "filepath")
    s = replace(r"[a-z]:(?:\\+" + SEG + r")+\\?", s, path_ok, "filepath")
    return s


def clean(raw):
    s = raw.lower()
    s = replace_addresses(s)
    s = replace_filepaths(s)
    s = "".join(c for c in s if ord(c) < 128)
    return s


def surface(s):
    return [t for t in re.split(r"[^a-z0-9_]+", s) if t]


def canon(t):
    while True:
        if t in STOP:
            return None
        s = PORTER.stem(SYN.get(t, t))
        if s == t:
            return t
        t = s


def normalize(raw):
    c = clean(raw)
    toks = [x for x in (canon(t) for t in surface(c)) if x is not None]
    return c, surface(c), toks


def sentences(c):
    return sum(1 for seg in re.split(r"[.!?\n]", c) if seg.strip())


def syllables(tokens):
    return sum(max(1, len(re.findall(r"[aeiouy]+", t))) for t in tokens)


def shape_stats(tokens):
    lens = np.array([len(t) for t in tokens], dtype=float)
    n = len(lens)
    if n < 3 or lens.var() == 0:
        return 0.0, 0.0
    sk = float(skew(lens, bias=False))
    ku = float(kurtosis(lens, fisher=True, bias=False)) if n >= 4 else 0.0
    return sk, ku


def lev(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def tag(t):
    if t in LEX:
        return LEX[t]
    for suf, tg in (("ing", "VERB"), ("ed", "VERB"), ("ize", "VERB"),
                    ("tion", "NOUN"), ("ness", "NOUN"), ("ment", "NOUN"), ("er", "NOUN")):
        if t.endswith(suf) and len(t) - len(suf) >= 2:
            return tg
    return "NOUN"


def phrases(tokens):
    tags = [tag(t) for t in tokens]
    np_, vp, i = 0, 0, 0
    while i < len(tags):
        j = i
        if tags[j] == "DET":
            j += 1
        while j < len(tags) and tags[j] == "ADJ":
            j += 1
        k = j
        while k < len(tags) and tags[k] == "NOUN":
            k += 1
        if k > j:
            np_ += 1
            i = k
        else:
            i += 1
    i = 0
    while i < len(tags):
        if tags[i] == "VERB":
            vp += 1
            while i < len(tags) and tags[i] == "VERB":
                i += 1
        else:
            i += 1
    return np_, vp


def embed(tokens, vecs, dim):
    hits = [vecs[t] for t in tokens if t in vecs]
    if not hits:
        return np.zeros(dim)
    return np.mean(np.array(hits), axis=0)


def dists(x, y):
    zx, zy = not x.any(), not y.any()
    if zx and zy:
        return [0.0] * 7
    cos = 1.0 if (zx or zy) else distance.cosine(x, y)
    den = np.abs(x + y).sum()
    bc = 0.0 if den == 0 else float(np.abs(x - y).sum() / den)
    return [distance.euclidean(x, y), distance.canberra(x, y), jaccard(x, y),
            distance.cityblock(x, y), cos, distance.minkowski(x, y, 3), bc]


def features(a, b, vecs, dim):
    ca, sa, ta = normalize(a)
    cb, sb, tb = normalize(b)
    ska, kua = shape_stats(ta)
    skb, kub = shape_stats(tb)
    stat = [abs(len(ca) - len(cb)), abs(len(ta) - len(tb)), abs(len(set(ta)) - len(set(tb))),
            sentences(ca), sentences(cb), syllables(ta), syllables(tb), len(ca), len(cb),
            len(set(ta) & set(tb)), lev(" ".join(ta), " ".join(tb)), ska, skb, kua, kub]
    npa, vpa = phrases(sa)
    npb, vpb = phrases(sb)
    sem = [npa, npb, vpa, vpb, abs(npa - npb), abs(vpa - vpb)]
    ctx = dists(embed(ta, vecs, dim), embed(tb, vecs, dim))
    return [float(v) for v in stat + sem + ctx]


PAIRS = [
    ("Router crashes after firmware upgrade",
     "After upgrading firmware the router at 192.168.1.1 crashes every few minutes. "
     "Logs in /var/log/messages show a kernel panic!",
     "Device reboots repeatedly following upgrade",
     "Following the firmware upgrade, the device fe80::1 keeps rebooting. "
     "See C:\\logs\\boot.txt for details. Is this a known issue?"),
    ("Search results page is blank",
     "Opening the search page displays an empty list even when matching items exist.\n"
     "Refreshing does not help.",
     "Export to CSV loses Unicode characters",
     "Exporting a report with names like Zo\u00eb or J\u00fcrgen drops the accented letters; "
     "the file at /home/user/report.csv is corrupted. Port aa:bb:cc:dd:ee:ff flaps."),
    ("Login button unresponsive on settings screen",
     "Clicking the login button on the settings screen does nothing at all in version 3.2.1.",
     "Login button unresponsive on settings screen",
     "Clicking the login button on the settings screen does nothing at all in version 3.2.1."),
]

DIM = 4


def main():
    rng = np.random.default_rng(7)
    vocab = sorted({t for p in PAIRS for txt in (p[0] + " " + p[1], p[2] + " " + p[3])
                    for t in normalize(txt)[2]})
    # leave every fifth word out of the vocabulary to exercise OOV skipping
    vecs = {w: np.round(rng.normal(0, 1, DIM), 6) for i, w in enumerate(vocab) if i % 5 != 4}
    with open(HERE / "golden.vec", "w") as f:
        f.write(f"{len(vecs)} {DIM}\n")
        for w in sorted(vecs):
            f.write(w + " " + " ".join(repr(float(v)) for v in vecs[w]) + "\n")
    out = []
    for ha, da, hb, db in PAIRS:
        a, b = ha + " " + da, hb + " " + db
        out.append({"a": {"headline": ha, "description": da},
                    "b": {"headline": hb, "description": db},
                    "features": features(a, b, vecs, DIM),
                    "tokens_a": normalize(a)[2], "tokens_b": normalize(b)[2]})
    (HERE / "golden_pairs.json").write_text(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
