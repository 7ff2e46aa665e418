"""
From patch likelihoods to building verdicts
===========================================

Patch likelihood vectors whose top two classes are closer than 0.25 are
discarded as ambiguous. The rest are combined by majority vote (MV) or by
averaging the likelihoods (LH). An image that loses every patch is reported
as undecidable rather than guessed.
"""

from bcond.aggregation import aggregate, ambiguity_filter, average_likelihood, majority_vote
from bcond.evaluation import accuracy, zero_rule

patches = [(0.70, 0.25, 0.05), (0.60, 0.40, 0.00), (0.10, 0.20, 0.70), (0.65, 0.30, 0.05)]
kept = ambiguity_filter(patches, 0.25)
print("kept", len(kept), "of", len(patches), "patch vectors")
print("MV verdict:", majority_vote(kept).name)
cls, mean = average_likelihood(kept)
print("LH verdict:", cls.name, "mean likelihoods", mean.round(3))

# all patches ambiguous: no verdict
print("undecidable example:", aggregate("img", [(0.4, 0.35, 0.25)], "MV").verdict_label)

# the published confusion matrices and test-set class counts
mv = [[505, 205, 25], [227, 713, 67], [67, 163, 206]]
lh = [[491, 211, 33], [214, 711, 82], [64, 166, 206]]
print("MV accuracy %.4f, LH accuracy %.4f" % (accuracy(mv), accuracy(lh)))
print("zero-rule baseline %.4f" % zero_rule(["A"] * 737 + ["B"] * 1008 + ["C"] * 438))
