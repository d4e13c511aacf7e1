"""Dash PrivateSend input selection and the cluster intersection attack."""

import random
from dataclasses import dataclass

# 1.00001 * 10^k coins expressed in base units (10^8 per coin)
DENOMINATIONS = (1_000_010, 10_000_100, 100_001_000, 1_000_010_000)

INSUFFICIENT_FUNDS = "Insufficient Funds"


@dataclass(frozen=True)
class Coin:
    tx_hash: str
    index: int
    value: int


class DenominatedWallet:
    """Unspent denominated outputs, grouped by originating mix tx."""

    def __init__(self, coins):
        self.coins = list(coins)
        for c in self.coins:
            if c.value not in DENOMINATIONS:
                raise ValueError(f"{c.value} is not a valid denomination")
        self.by_tx = {}
        for c in self.coins:
            self.by_tx.setdefault(c.tx_hash, []).append(c)

    def total(self) -> int:
        return sum(c.value for c in self.coins)


def select_ps_inputs(wallet: DenominatedWallet, send_amount: int):
    """Wallet input selection for a PrivateSend of exactly send_amount.

    Transactions are visited in (denomination, tx hash) order; within a tx,
    outputs accumulate until adding one would overshoot, which skips the
    rest of that tx.  Returns the selected coins on exact equality,
    INSUFFICIENT_FUNDS otherwise.
    """
    selected = []
    total = 0
    if total == send_amount:
        return selected
    txs = sorted(wallet.by_tx.items(),
                 key=lambda kv: (min(c.value for c in kv[1]), kv[0]))
    for _, outputs in txs:
        for coin in outputs:
            if total + coin.value > send_amount:
                break
            selected.append(coin)
            total += coin.value
            if total == send_amount:
                return selected
    return INSUFFICIENT_FUNDS


def cluster_intersection_attack(input_coins, mix_graph) -> set:
    """Intersect the candidate pre-mix clusters of each input coin.

    mix_graph maps a coin to the set of clusters it could trace back to.
    The attack succeeds when the intersection is a single cluster.
    """
    result = None
    for coin in input_coins:
        candidates = set(mix_graph[coin])
        result = candidates if result is None else result & candidates
    return result if result is not None else set()


class MixSimulator:
    """Simulated mixing population.

    Each mix has a fixed number of participants contributing 5-9 coins
    apiece; a coin mixed for r rounds traces back to the union of its mix
    participants' (r-1)-round candidate sets.
    """

    def __init__(self, seed, population=50, participants=3,
                 coins_per_participant=(5, 9), rounds=2):
        self.rng = random.Random(seed)
        self.population = population
        self.participants = participants
        self.coins_per = coins_per_participant
        self.rounds = rounds

    def _other_participants(self, owner):
        others = []
        while len(others) < self.participants - 1:
            c = self.rng.randrange(self.population)
            if c != owner:
                others.append(c)
        return others

    def candidate_set(self, owner, rounds=None) -> frozenset:
        """Clusters a coin owned by `owner` could trace back to after the
        given number of mixing rounds."""
        rounds = self.rounds if rounds is None else rounds
        if rounds == 0:
            return frozenset((owner,))
        members = [owner] + self._other_participants(owner)
        out = set()
        for m in members:
            out |= self.candidate_set(m, rounds - 1)
        return frozenset(out)

    def wallet_coins(self, owner, n_coins) -> list:
        return [self.candidate_set(owner) for _ in range(n_coins)]


def attack_success_curve(seed, max_inputs=40, trials=1000, population=50,
                         rounds=2, participants=3):
    """Monte-Carlo success rate of the intersection attack as a function of
    the PrivateSend input count.

    Candidate sets are shared across input counts within a trial, so the
    per-trial success indicator (and hence the rate) is nondecreasing in the
    number of inputs.
    """
    sim = MixSimulator(seed, population=population, rounds=rounds,
                       participants=participants)
    successes = [0] * (max_inputs + 1)
    for _ in range(trials):
        owner = sim.rng.randrange(population)
        inter = None
        for k in range(1, max_inputs + 1):
            cand = sim.candidate_set(owner)
            inter = set(cand) if inter is None else inter & cand
            if inter == {owner}:
                for j in range(k, max_inputs + 1):
                    successes[j] += 1
                break
    return [successes[k] / trials for k in range(1, max_inputs + 1)]
