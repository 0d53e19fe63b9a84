"""Analytic online round counts for composed protocols.

A round is one level of causal depth: a message sent after receiving a
message of depth ``k`` has depth ``k + 1`` (see the transport metrics). To
predict the count for a composition we track, for P0 and P1, the depth of
the latest message each has received, ``(a0, a1)``, through each building
block:

* exchange (both multiplications): each side sends at once and waits for
  the other, ``(a0, a1) -> (max(a0, a1 + 1), max(a1, a0 + 1))``;
* nonlinear: P1 -> P0 -> P1 -> P0, where P1's output share is data
  independent, so P1 moves on after its last send;
* prediction: P1 -> P0 -> P1 -> P0 -> P1.

The total is the largest depth reached. Because an exchange can overlap
with a one-way message still in flight, the total is lower than the plain
sum of per-protocol rounds (18 per layer, 42 per toy-model token).
"""


def exchange(a):
    a0, a1 = a
    return max(a0, a1 + 1), max(a1, a0 + 1)


def nonlinear(a):
    a0, a1 = a
    t = max(a0, a1 + 1) + 1
    return t + 1, t


def prediction(a):
    a0, a1 = a
    t = max(a0, a1 + 1) + 1
    return t + 1, t + 2


LAYER_SCHEDULE = (nonlinear, exchange, exchange, nonlinear, exchange,
                  exchange, nonlinear, exchange, nonlinear, exchange)
SEQUENTIAL_LAYER_ROUNDS = 18


def run_schedule(blocks, start=(0, 0)):
    a = start
    for block in blocks:
        a = block(a)
    return a


def layer_rounds():
    """Rounds of one layer forward starting from freshly shared inputs."""
    return max(run_schedule(LAYER_SCHEDULE))


def token_schedule(n_layers):
    return (exchange,) + LAYER_SCHEDULE * n_layers + (exchange, prediction)


def generation_rounds(n_layers, steps):
    """Per-step round counts for ``steps`` tokens, as the transcript attributes them.

    Each step is credited with the depth levels it opens, so a level shared
    with the previous step's last message belongs to the earlier step.
    """
    a, prev, out = (0, 0), 0, []
    for _ in range(steps):
        a = run_schedule(token_schedule(n_layers), a)
        out.append(max(a) - prev)
        prev = max(a)
    return out
