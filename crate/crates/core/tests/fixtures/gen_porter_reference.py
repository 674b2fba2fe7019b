# Regenerates porter_reference.tsv (word list is the first column of the existing file).
# Classic Porter via NLTK's ORIGINAL_ALGORITHM mode, plus the short-word rule from
# Porter's reference implementation: words of length <= 2 are returned unchanged.
from nltk.stem.porter import PorterStemmer

s = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)
words = [l.split("\t")[0] for l in open("porter_reference.tsv")]
with open("porter_reference.tsv", "w") as f:
    for w in words:
        f.write(f"{w}\t{w if len(w) <= 2 else s.stem(w)}\n")
