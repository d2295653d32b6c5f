"""Shared audit helpers used by both the unit tests and the acceptance suite."""


def audit_protocol_invariants(events, params, n_speakers, roster=None):
    """Independent audit of the turn-taking rules over a raw event stream.

    Checks, from events alone: message budget per dialog, validation attempts
    per round, horizon bound, no execution without a passing plan, and the
    proposal-eligibility rule (every speaker heard before a plan lands).
    """
    problems = []
    max_messages = params.M if params.M is not None else 2 * n_speakers
    k_budget = 1 if params.no_feedback else params.K

    dialogs = []  # list of speaker lists
    per_round_feedbacks = {}
    rounds = set()
    last_plan = None
    for e in events:
        if e["type"] == "dialog":
            dialogs.append([])
        elif e["type"] == "message":
            if dialogs:
                dialogs[-1].append(e["payload"]["speaker"])
            rounds.add(e["round"])
        elif e["type"] == "feedback":
            per_round_feedbacks[e["round"]] = per_round_feedbacks.get(e["round"], 0) + 1
        elif e["type"] == "plan":
            last_plan = e
            if roster is not None and dialogs:
                spoken = set(dialogs[-1])
                if spoken != set(roster):
                    problems.append(
                        f"round {e['round']}: plan proposed before everyone spoke ({sorted(spoken)})"
                    )
        elif e["type"] == "reward":
            if last_plan is None or not last_plan["payload"]["report"]["ok"]:
                problems.append(f"round {e['round']}: executed without a passing plan")
    for i, speakers in enumerate(dialogs):
        if len(speakers) > max_messages:
            problems.append(f"dialog {i}: {len(speakers)} messages > M={max_messages}")
    for r, n in per_round_feedbacks.items():
        if n > k_budget:
            problems.append(f"round {r}: {n} failed attempts > K={k_budget}")
    horizon = params.T * (2 if params.no_feedback else 1)
    if rounds and max(rounds) >= horizon:
        problems.append("round index beyond the horizon")
    return problems


def brute_force_grid_ok(instance, paths):
    """Independent grid-path validity checker (mirrors the validator's rules)."""
    names = [a[0] for a in instance.agents]
    for n in names:
        if n not in paths or not paths[n]:
            return False
    X, Y, Z = instance.size
    for name, init, goal in instance.agents:
        p = paths[name]
        if p[0] != init or p[-1] != goal:
            return False
        for c in p:
            x, y, z = c
            if not (0 <= x < X and 0 <= y < Y and 0 <= z < Z):
                return False
            if c in instance.obstacles:
                return False
        for a, b in zip(p, p[1:]):
            diff = [abs(a[k] - b[k]) for k in range(3)]
            if sorted(diff) != [0, 0, 1]:
                return False
    horizon = max(len(paths[n]) for n in names)

    def at(name, t):
        p = paths[name]
        return p[t] if t < len(p) else p[-1]

    for t in range(horizon):
        cells = [at(n, t) for n in names]
        if len(set(cells)) != len(cells):
            return False
    for t in range(horizon - 1):
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                if at(a, t) == at(b, t + 1) and at(a, t + 1) == at(b, t):
                    return False
    return True


def mutate_grid_paths(rng, instance, paths):
    """Random corruption of a solved path set (sometimes leaves it intact)."""
    out = {k: list(v) for k, v in paths.items()}
    kind = rng.integers(0, 6)
    name = instance.names[int(rng.integers(0, len(instance.names)))]
    p = out[name]
    if kind == 0:
        return out
    if kind == 1 and len(p) > 2:
        del p[int(rng.integers(1, len(p) - 1))]
    elif kind == 2:
        i = int(rng.integers(0, len(p)))
        x, y, z = p[i]
        p[i] = (x + instance.size[0], y, z)
    elif kind == 3 and instance.obstacles:
        i = int(rng.integers(1, max(2, len(p) - 1)))
        p.insert(i, next(iter(instance.obstacles)))
    elif kind == 4 and len(p) > 1:
        p.pop()
    elif kind == 5:
        other = instance.names[int(rng.integers(0, len(instance.names)))]
        if other != name:
            out[name] = list(out[other])
    return out
