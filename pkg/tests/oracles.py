"""Independent reference implementations used by the tests.

These are written from the rules directly, with plain loops, and share no
helpers with the package beyond reading dataclass fields.
"""

import math
from fractions import Fraction

MAX = 2**256 - 1


def clamp(x):
    t = math.floor(x)
    if t < 1:
        return 1
    if t > MAX:
        return MAX
    return t


def pow_rule(etas, rewards, w, target):
    """Returns None when the rule is undefined (lone validator / zero sums)."""
    if len(etas) < 2:
        return None
    eta_o = Fraction(0)
    r_o = Fraction(0)
    for j in range(len(etas)):
        if j != w:
            eta_o += etas[j]
            r_o += Fraction(rewards[j])
    if eta_o == 0 or r_o == 0:
        return None
    return clamp(Fraction(etas[w]) / eta_o * Fraction(rewards[w]) / r_o * target)


def pos_rule(ks, stakes, w, incoming, target):
    if len(ks) < 2:
        return None
    k_o = sum(ks[j] for j in range(len(ks)) if j != w)
    s_o = sum(stakes[j] for j in range(len(stakes)) if j != w)
    if k_o == 0 or s_o == 0:
        return None
    if k_o >= incoming:
        return clamp(Fraction(ks[w], k_o) * Fraction(stakes[w], s_o) * target)
    if ks[w] == 0:
        return None
    return clamp(Fraction(k_o, ks[w]) * Fraction(stakes[w], s_o) * target)


def _cap(ga, eta, ge):
    if eta * ge > ga:
        return 0
    return ga // (eta * ge)


def allocate(validators, leader, k_cap, qtable=None, allow_delegate=False):
    """Branch replay of the placement algorithm. Returns (outcome, target, pseudo_index)."""
    if not validators:
        return ("waited", None, None)
    W = None
    for v in validators:
        if v.pair_id == leader:
            W = v
    chains = W.chains
    eta_x = len(chains) if chains else 1

    def cap(j):
        if j == 0:
            return _cap(W.profile.storage_avail, eta_x, W.profile.storage_per_block)
        return _cap(chains[j].storage_avail, eta_x, chains[j].storage_per_block)

    def defer():
        if not allow_delegate or qtable is None:
            return ("waited", None, None)
        best_q, best_id = None, None
        for v in validators:
            if v.pair_id == W.pair_id:
                continue
            n = len(v.chains) if v.chains else 1
            own = _cap(v.profile.storage_avail, n, v.profile.storage_per_block)
            strength = v.chains[0].strength if v.chains else 0
            residual = min(own, k_cap - strength)
            if residual < 0:
                residual = 0
            if residual - 1 <= 0:
                continue
            bucket = residual - 1 if residual - 1 < 3 else 3
            q = qtable.entries.get(((v.pair_id, bucket), "delegate"), Fraction(0))
            if best_q is None or q > best_q or (q == best_q and v.pair_id < best_id):
                best_q, best_id = q, v.pair_id
        if best_id is None:
            return ("waited", None, None)
        return ("delegated", best_id, None)

    if eta_x > W.profile.pseudo_limit:
        return defer()
    K = cap(0)
    if K == 0:
        return defer()
    bound = K + chains[0].strength
    if K > 1 and eta_x > 1:
        X = []
        for j in range(eta_x):
            c = cap(j)
            if c >= 1 and chains[j].strength < k_cap and c + chains[j].strength <= bound:
                X.append(j)
        if len(X) == 0:
            return defer()
        if len(X) == 1:
            return ("placed", chains[X[0]].pair_id, X[0])
        top = -1
        for j in X:
            if chains[j].stakes > top:
                top = chains[j].stakes
        T = [j for j in X if chains[j].stakes == top]
        if len(T) == 1:
            return ("placed", chains[T[0]].pair_id, T[0])
        best = None
        for j in T:
            c = chains[j]
            r = 1 / Fraction(c.growth) + Fraction(c.coupling) / Fraction(c.power)
            if best is None or r > best[0] or (r == best[0] and c.pair_id < best[1]):
                best = (r, c.pair_id, j)
        return ("placed", best[1], best[2])
    if K == 1 or eta_x == 1:
        if chains[0].strength >= k_cap:
            return defer()
        return ("placed", chains[0].pair_id, 0)
    return defer()


# ---------------------------------------------------------------- exhaustive grids

def placement_grid():
    """One winner with 1..3 pseudo chains, every chain drawn from 36 settings, eta_s in 1..3.

    Values stay within 16: storage in {0, 4, 16} (G_e = 2), strength in
    {0, 3, 8} against K_max = 8, stakes in {7, 10}, (theta, omega) in
    {(1, 1), (2, 4)}.
    """
    import itertools

    from reinshard.allocation import NodeProfile, PseudoChain, Validator

    options = list(itertools.product((0, 4, 16), (0, 3, 8), (7, 10), ((1, 1), (2, 4))))
    for eta_x in (1, 2, 3):
        for combo in itertools.product(options, repeat=eta_x):
            for eta_s in (1, 2, 3):
                chains = []
                for j, (ga, strength, stakes, (theta, omega)) in enumerate(combo):
                    chains.append(PseudoChain(j, strength, stakes, Fraction(theta), Fraction(omega),
                                              Fraction(1), ga, 2))
                ga0 = combo[0][0]
                profile = NodeProfile(pseudo_limit=eta_s, pseudo_used=eta_x, storage_avail=ga0,
                                      storage_per_block=2, stakes=combo[0][2])
                yield [Validator(0, profile, tuple(chains))], 0


def delegation_grid():
    """A deferring winner plus 0..4 other validators, each with its own Q-row."""
    import itertools

    from reinshard.allocation import DELEGATE, NodeProfile, PseudoChain, QTable, Validator

    winners = [
        NodeProfile(pseudo_limit=1, storage_avail=0, storage_per_block=2),  # no capacity
        NodeProfile(pseudo_limit=1, storage_avail=16, storage_per_block=2),  # sub-chain full
    ]
    winner_chains = [(PseudoChain(0, 0, 7),), (PseudoChain(0, 8, 7),)]
    others = list(itertools.product((0, 4, 16), (0, 7), (0, 2)))
    for w_profile, w_chains in zip(winners, winner_chains):
        winner = Validator(0, w_profile, w_chains)
        for n in range(0, 5):
            for combo in itertools.product(others, repeat=n):
                qtable = QTable()
                vals = [winner]
                for i, (ga, strength, q) in enumerate(combo, start=1):
                    vals.append(Validator(i, NodeProfile(pseudo_limit=1, storage_avail=ga, storage_per_block=2,
                                                         stakes=i), (PseudoChain(i, strength, i),)))
                    for bucket in range(4):
                        qtable.entries[((i, bucket), DELEGATE)] = Fraction(q + bucket)
                yield vals, 0, qtable
