"""Plain-Python reference implementations used as independent oracles.

Everything here works observation by observation with ``math`` scalars, so
it shares no code path with the vectorized estimators it cross-checks. The
fitted model coefficients are taken as inputs; weights and contrasts are
recomputed from first principles.
"""

import math


def logistic(z):
    return 1.0 / (1.0 + math.exp(-z))


def eval_terms(spec, x):
    """Evaluate a ModelSpec term-by-term on one covariate vector."""
    row = []
    for term in spec.terms:
        kind = type(term).__name__
        if kind == "Intercept":
            row.append(1.0)
        elif kind == "Main":
            row.append(x[term.index])
        elif kind == "Power":
            row.append(x[term.index] ** term.degree)
        else:
            row.append(x[term.first] * x[term.second])
    return row


def dot(a, b):
    return sum(u * v for u, v in zip(a, b))


def membership_probs(props, x):
    """P(S = s | x) for s = 0..m from the multinomial coefficients."""
    v = eval_terms(props.membership_spec, x)
    exps = [math.exp(dot(v, beta)) for beta in props.membership.coefficients]
    denom = 1.0 + sum(exps)
    return [1.0 / denom] + [e / denom for e in exps]


def treat_prob(props, x, s):
    v = eval_terms(props.treatment_spec, x)
    return logistic(dot(v, props.treatment[s].coefficients))


def hajek(pairs):
    """pairs: (weight, outcome); returns the normalized weighted mean."""
    total = sum(w for w, _ in pairs)
    return sum(w * y for w, y in pairs) / total


def pooled_estimate(observations, props):
    treated = []
    control = []
    for obs in observations:
        if obs.study == 0:
            continue
        probs = membership_probs(props, obs.covariates)
        iosp = probs[0] / (1.0 - probs[0])
        e1 = treat_prob(props, obs.covariates, obs.study)
        if obs.arm == 1:
            treated.append(((1.0 / e1) * iosp, obs.outcome))
        else:
            control.append(((1.0 / (1.0 - e1)) * iosp, obs.outcome))
    return hajek(treated) - hajek(control)


def study_estimate(observations, props, s):
    treated = []
    control = []
    for obs in observations:
        if obs.study != s:
            continue
        probs = membership_probs(props, obs.covariates)
        ratio = probs[0] / probs[s]
        e1 = treat_prob(props, obs.covariates, obs.study)
        if obs.arm == 1:
            treated.append(((1.0 / e1) * ratio, obs.outcome))
        else:
            control.append(((1.0 / (1.0 - e1)) * ratio, obs.outcome))
    return hajek(treated) - hajek(control)


def two_stage_estimate(observations, props, m, study_weights=None):
    weights = study_weights or {s: 1.0 for s in range(1, m + 1)}
    total = sum(weights.values())
    return sum(
        weights[s] * study_estimate(observations, props, s) for s in range(1, m + 1)
    ) / total


def unadjusted_estimate(observations):
    treated = [(1.0, o.outcome) for o in observations if o.study != 0 and o.arm == 1]
    control = [(1.0, o.outcome) for o in observations if o.study != 0 and o.arm == 0]
    return hajek(treated) - hajek(control)
