"""
Train and test on a synthetic corpus
====================================

Noise properties are equally common in both classes; five planted
properties are rare in benign apps and common in malware.  A greedy
policy trained on one half should catch most malware in the other.
"""

from policygen import build_instance, policy_from_solution, solve_greedy
from policygen.evalkit import (acceptance_profile, evaluate, gen_corpus, partition,
                               render_table, split_corpus)

profile = acceptance_profile(seed=42)
benign, malware = gen_corpus(profile)
train, test = split_corpus(benign + malware, 0.5, seed=42)

inst = build_instance(*partition(train))
res = solve_greedy(inst, seed=42)
policy = policy_from_solution(inst, res.assignment)
print(len(inst.vars), "properties,", len(policy), "deny rules")
for rule in policy.rules:
    print("   deny", rule.to_token())

report = evaluate(policy, *partition(test), name="greedy")
print(render_table([report]))

###############################################################################
# The rules that catch the most held-out malware

for prop, hits in sorted(report.per_rule_hits.items(), key=lambda kv: -kv[1]):
    print("%4d  %s" % (hits, prop.to_token()))
