"""Per-agent policies over fixed-memory histories."""
import numpy as np

LOGIT_CLIP = 50.0


def softmax(logits):
    z = np.exp(logits - logits.max())
    return z / z.sum()


def draw(probs, u):
    """Inverse-CDF sample of an index from ``probs`` given a uniform ``u``."""
    c = 0.0
    last = len(probs) - 1
    for a in range(last):
        c += probs[a]
        if u < c:
            return a
    return last


class SoftmaxPolicy:
    """Tabular softmax actor: one logit row per history, zeros until touched.

    Histories are assigned integer ids in first-touch order, which fixes the
    flat parameter index ``id * n_actions + action`` used by gradient records.
    """

    def __init__(self, n_actions, clip=LOGIT_CLIP):
        self.n_actions = int(n_actions)
        self.clip = clip
        self.logits = {}
        self._ids = {}
        self._cache = {}

    def history_id(self, history):
        hid = self._ids.get(history)
        if hid is None:
            hid = self._ids[history] = len(self._ids)
        return hid

    @property
    def histories(self):
        return list(self._ids)

    @property
    def n_params(self):
        return len(self._ids) * self.n_actions

    def param_index(self, history, action):
        return self.history_id(history) * self.n_actions + action

    def theta(self, history):
        row = self.logits.get(history)
        if row is None:
            self.history_id(history)
            row = self.logits[history] = np.zeros(self.n_actions)
        return row

    def probs(self, history):
        p = self._cache.get(history)
        if p is None:
            row = self.logits.get(history)
            p = np.full(self.n_actions, 1.0 / self.n_actions) if row is None else softmax(row)
            self._cache[history] = p
        return p

    def act(self, history, rng):
        return draw(self.probs(history), rng.random())

    def grad_log(self, history, action):
        """d log pi(action | history) / d theta(history, .) = onehot - pi."""
        g = -self.probs(history)  # fresh array: unary minus copies
        g[action] += 1.0
        return g

    def apply_gradient(self, history, step):
        row = self.theta(history)
        row += step
        np.clip(row, -self.clip, self.clip, out=row)
        self._cache.pop(history, None)
        if not np.all(np.isfinite(row)):
            raise FloatingPointError(f"non-finite logits at history {history!r}")

    def set_logits(self, history, values):
        self.theta(history)[:] = values
        self._cache.pop(history, None)

    def copy(self):
        other = SoftmaxPolicy(self.n_actions, self.clip)
        other._ids = dict(self._ids)
        other.logits = {h: row.copy() for h, row in self.logits.items()}
        return other


class TabularPolicy:
    """Explicit probability table; histories not in the table use ``default``."""

    def __init__(self, n_actions, table=None, default=None):
        self.n_actions = int(n_actions)
        self.table = {h: np.asarray(p, dtype=float) for h, p in (table or {}).items()}
        if default is None:
            default = np.full(self.n_actions, 1.0 / self.n_actions)
        self.default = np.asarray(default, dtype=float)

    def probs(self, history):
        return self.table.get(history, self.default)

    def act(self, history, rng):
        return draw(self.probs(history), rng.random())


def uniform_policies(n_actions):
    return [TabularPolicy(n) for n in n_actions]


def deterministic_policy(n_actions, action):
    p = np.zeros(n_actions)
    p[action] = 1.0
    return TabularPolicy(n_actions, default=p)


def random_softmax_policies(n_actions, histories, rng, scale=1.0):
    """Softmax policies with N(0, scale^2) logits on the given local histories.

    ``histories[i]`` lists agent i's histories.
    """
    out = []
    for n, hs in zip(n_actions, histories):
        pol = SoftmaxPolicy(n)
        for h in hs:
            pol.set_logits(h, rng.normal(0.0, scale, size=n))
        out.append(pol)
    return out
