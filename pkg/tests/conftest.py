"""Shared fixtures and independent oracle implementations.

The oracles here deliberately avoid the library's own code paths: the
transformer forward pass is re-derived with scalar loops and math.erf,
rank correlation with an explicit sort-and-average routine, so tests
compare two independent routes to the same numbers.
"""

import math

import numpy as np
import pytest


def scalar_gelu(x: float) -> float:
    return 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))


def scalar_layernorm(vec, gamma, beta, eps=1e-5):
    n = len(vec)
    mean = sum(vec) / n
    var = sum((v - mean) ** 2 for v in vec) / n
    return [(v - mean) / math.sqrt(var + eps) * g + b for v, g, b in zip(vec, gamma, beta)]


def scalar_linear(vec, weight, bias):
    # weight is (out, in) as stored by torch Linear layers.
    return [sum(w_ij * v_j for w_ij, v_j in zip(row, vec)) + b
            for row, b in zip(weight, bias)]


def toy_forward_oracle(params: dict, token_ids, num_heads: int, output_scale: float):
    """Scalar re-implementation of the toy transformer forward pass.

    ``params`` maps state-dict names to nested Python lists.  Returns the
    final hidden states as a list of per-position vectors.  All positions
    are assumed valid (callers pass unpadded sequences).
    """
    length = len(token_ids)
    tok = params["token_embedding.weight"]
    pos = params["position_embedding.weight"]
    x = [[tok[t][d] + pos[i][d] for d in range(len(tok[0]))]
         for i, t in enumerate(token_ids)]
    hidden = len(x[0])
    head_dim = hidden // num_heads

    layer = 0
    while f"blocks.{layer}.query.weight" in params:
        p = lambda name: params[f"blocks.{layer}.{name}"]
        q = [scalar_linear(row, p("query.weight"), p("query.bias")) for row in x]
        k = [scalar_linear(row, p("key.weight"), p("key.bias")) for row in x]
        v = [scalar_linear(row, p("value.weight"), p("value.bias")) for row in x]

        context = [[0.0] * hidden for _ in range(length)]
        for h in range(num_heads):
            lo, hi = h * head_dim, (h + 1) * head_dim
            for i in range(length):
                scores = []
                for j in range(length):
                    dot = sum(q[i][d] * k[j][d] for d in range(lo, hi))
                    scores.append(dot / math.sqrt(head_dim))
                m = max(scores)
                exps = [math.exp(s - m) for s in scores]
                z = sum(exps)
                for j in range(length):
                    a = exps[j] / z
                    for d in range(lo, hi):
                        context[i][d] += a * v[j][d]

        out = [scalar_linear(row, p("out.weight"), p("out.bias")) for row in context]
        x = [scalar_layernorm([xi + oi for xi, oi in zip(xr, orow)],
                              p("norm1.weight"), p("norm1.bias"))
             for xr, orow in zip(x, out)]
        ff = [scalar_linear([scalar_gelu(h1) for h1 in
                             scalar_linear(row, p("ff1.weight"), p("ff1.bias"))],
                            p("ff2.weight"), p("ff2.bias"))
              for row in x]
        x = [scalar_layernorm([xi + fi for xi, fi in zip(xr, frow)],
                              p("norm2.weight"), p("norm2.bias"))
             for xr, frow in zip(x, ff)]
        layer += 1

    return [[value * output_scale for value in row] for row in x]


def rank_average_oracle(values):
    """Average ranks (1-based) with explicit tie grouping."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def pearson_oracle(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    num = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    dx = math.sqrt(sum((x - mx) ** 2 for x in xs))
    dy = math.sqrt(sum((y - my) ** 2 for y in ys))
    return num / (dx * dy)


def spearman_oracle(pred, gold):
    """Brute-force tie-aware Spearman: average ranks then loop Pearson."""
    return pearson_oracle(rank_average_oracle(list(pred)), rank_average_oracle(list(gold)))


@pytest.fixture(scope="session")
def forward_oracle():
    return toy_forward_oracle


@pytest.fixture(scope="session")
def spearman_bruteforce():
    return spearman_oracle


@pytest.fixture(scope="session")
def toy_encoder():
    from semrel.encoders import ToyEncoder

    return ToyEncoder()


@pytest.fixture(scope="session")
def overlap_dataset():
    from semrel.synthetic import make_overlap_dataset

    return make_overlap_dataset()


def module_params_as_lists(module) -> dict:
    return {name: tensor.detach().numpy().tolist()
            for name, tensor in module.state_dict().items()}
