"""
Inferring a policy from six apps
================================

Three benign and three malicious apps over five activity permissions.
The exact solver picks which properties to deny.
"""

from policygen import (AppSpec, Context, Label, Property, Resource, ResourceKind,
                       build_instance, policy_from_solution, serialize_policy, solve_exact)

P = {x: Property(Context.ACTIVITY, Resource.permission(f"P_{x}")) for x in "ABCDE"}


def app(app_id, label, *names):
    return AppSpec(app_id, label, ResourceKind.PERMISSION, frozenset(P[n] for n in names))


benign = [app("benign1", Label.BENIGN, "A"),
          app("benign2", Label.BENIGN, "C"),
          app("benign3", Label.BENIGN, "B", "E")]
malware = [app("malware1", Label.MALWARE, "A", "B"),
           app("malware2", Label.MALWARE, "A", "C"),
           app("malware3", Label.MALWARE, "D")]

# one variable per distinct property; True means "allowed"
inst = build_instance(benign, malware)
print([p.to_token() for p in inst.vars])

res = solve_exact(inst)
print("assignment:", res.assignment)
print("score: %s of %s" % (res.score, inst.total_weight))

# every False variable becomes a deny rule
policy = policy_from_solution(inst, res.assignment, {"name": "six-apps"})
print(serialize_policy(policy))
