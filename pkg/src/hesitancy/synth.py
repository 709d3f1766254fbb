"""Synthetic county fileset generator for desk-scale runs and tests.

Counties fall into latent groups with distinct uptake decay rates, so the
weekly hesitancy value is constant per county by construction and natural
breaks can recover the planted grouping. Features include one dominant signal
tracking the county's hesitancy, weaker group-informative signals, pure noise,
and one highly collinear pair for the multicollinearity filter. All files are
written in the pipeline's input formats; a truth file records the planted
structure for tests.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .tableio import write_csv, write_json

POSITIVE_WORDS = ["good", "great", "love", "safe", "hope", "thank", "grateful", "happy"]
NEGATIVE_WORDS = ["bad", "horrible", "worry", "scared", "fear", "sick", "terrible", "hate"]
FILLER_WORDS = ["vaccine", "shot", "clinic", "county", "week", "news", "dose", "appointment"]


def _fips_codes(n: int) -> list[str]:
    codes = []
    for i in range(n):
        state = (i % 56) + 1
        county = (i // 56) * 2 + 1   # odd county codes, room for ~28k counties
        codes.append(f"{state:02d}{county:03d}")
    return codes


def generate_synthetic(n_counties: int, n_weeks: int, n_features: int, k_planted: int,
                       seed: int, outdir) -> dict:
    """Write a full synthetic input fileset; returns the path map.

    Group hesitancy means spread between 0.83 and 0.975 with within-group
    noise small enough that the planted partition is recoverable from any
    single week.
    """
    if min(n_counties, n_weeks, n_features) < 1 or k_planted < 2:
        raise ParameterError("all sizes must be positive and k_planted >= 2")
    if n_counties < k_planted:
        raise ParameterError("need at least one county per planted group")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    fips = _fips_codes(n_counties)
    groups = rng.integers(0, k_planted, size=n_counties)
    group_means = np.linspace(0.83, 0.975, k_planted)
    vhb = np.clip(group_means[groups] + rng.normal(0.0, 0.006, n_counties), 0.30, 0.995)
    q0 = rng.uniform(0.05, 0.15, n_counties)

    # uptake follows q_t = 1 - (1 - q0) * vhb^t, so (1-q_t)/(1-q_{t-1}) = vhb exactly
    weeks = list(range(1, n_weeks + 1))
    vacc_rows = []
    for i, f in enumerate(fips):
        for t in weeks:
            vacc_rows.append((f, t, float(1.0 - (1.0 - q0[i]) * vhb[i] ** t)))
    vaccination = write_csv(outdir / "vaccination.csv", ["fips", "week", "pct_fully_vaccinated"], vacc_rows)

    # feature layout: 1 dominant signal, then graded group signals, noise, one collinear pair
    n_info = max(1, min(15, n_features - 2))
    names, kinds, columns = [], {}, []
    names.append("signal_primary")
    kinds["signal_primary"] = "dynamic"
    columns.append(vhb + rng.normal(0.0, 0.004, n_counties))
    for j in range(1, n_info):
        name = f"signal_{j:02d}"
        names.append(name)
        kinds[name] = "static" if j % 2 == 0 else "dynamic"
        sigma = 0.07 + 0.01 * j
        columns.append(group_means[groups] + rng.normal(0.0, sigma, n_counties))
    n_noise = n_features - n_info - 2
    for j in range(max(n_noise, 0)):
        name = f"noise_{j:02d}"
        names.append(name)
        kinds[name] = "static"
        columns.append(rng.normal(0.0, 1.0, n_counties))
    if n_features - n_info >= 2:
        base = rng.normal(0.0, 1.0, n_counties)
        names += ["collinear_a", "collinear_b"]
        kinds["collinear_a"] = kinds["collinear_b"] = "static"
        columns.append(base)
        columns.append(0.95 * base + math.sqrt(1.0 - 0.95 ** 2) * rng.normal(0.0, 1.0, n_counties))
    matrix = np.column_stack(columns)

    feat_rows = [(f, *[float(v) for v in matrix[i]]) for i, f in enumerate(fips)]
    features = write_csv(outdir / "features.csv", ["fips"] + names, feat_rows)
    write_json(outdir / "features.csv.manifest.json",
               {"week": max(1, min(23, n_weeks)), "features": {n: {"kind": kinds[n]} for n in names}})

    # adjacency: grid graph over the county list
    side = int(math.ceil(math.sqrt(n_counties)))
    adj_rows = []
    for i in range(n_counties):
        r, c = divmod(i, side)
        if c + 1 < side and i + 1 < n_counties:
            adj_rows.append((fips[i], fips[i + 1]))
        if (r + 1) * side + c < n_counties:
            adj_rows.append((fips[i], fips[(r + 1) * side + c]))
    adjacency = write_csv(outdir / "adjacency.csv", ["fips_a", "fips_b"], adj_rows)

    populations = rng.integers(1_000, 900_000, size=n_counties)
    population = write_csv(outdir / "population.csv", ["fips", "population"],
                           [(f, int(p)) for f, p in zip(fips, populations)])

    # group sentiment decays with hesitancy; tweets mix lexicon and filler words
    sentiment_means = np.linspace(0.6, -0.6, k_planted)
    tweet_rows = []
    tid = 0
    for i, f in enumerate(fips):
        for _ in range(int(rng.integers(1, 4))):
            p_positive = 0.5 + 0.5 * sentiment_means[groups[i]]
            mood = POSITIVE_WORDS if rng.random() < p_positive else NEGATIVE_WORDS
            words = [str(rng.choice(mood))]
            words += [str(w) for w in rng.choice(FILLER_WORDS, size=3)]
            words.append(str(rng.choice(mood)))
            tweet_rows.append((f"t{tid:07d}", f, " ".join(words),
                               int(rng.integers(0, 50)), int(rng.integers(0, 20)), int(rng.integers(0, 10))))
            tid += 1
    tweets = write_csv(outdir / "tweets.csv", ["id", "fips", "text", "likes", "retweets", "replies"], tweet_rows)

    tone_rows = []
    aid = 0
    for i, f in enumerate(fips):
        for _ in range(int(rng.integers(1, 3))):
            tone = float(np.clip(rng.normal(40.0 * sentiment_means[groups[i]], 12.0), -100.0, 100.0))
            tone_rows.append((f"a{aid:07d}", f, tone))
            aid += 1
    tones = write_csv(outdir / "tones.csv", ["article_id", "fips", "tone"], tone_rows)

    lex_rows = sorted([(w, 1.9) for w in POSITIVE_WORDS] + [(w, -2.1) for w in NEGATIVE_WORDS])
    lexicon = outdir / "lexicon.tsv"
    with open(lexicon, "w") as fh:
        for word, val in lex_rows:
            fh.write(f"{word}\t{val}\n")

    # external survey-style estimate, positively related to the planted hesitancy
    external = write_csv(outdir / "external.csv", ["fips", "estimate"],
                         [(f, float(0.5 * vhb[i] - 0.3 + rng.normal(0.0, 0.01))) for i, f in enumerate(fips)])

    geojson = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"fips": f},
                "geometry": {"type": "Polygon", "coordinates": [[
                    [i % side, i // side], [i % side + 1, i // side],
                    [i % side + 1, i // side + 1], [i % side, i // side + 1],
                    [i % side, i // side],
                ]]},
            }
            for i, f in enumerate(fips)
        ],
    }
    base_layer = write_json(outdir / "base.geojson", geojson)

    truth = write_json(outdir / "truth.json", {
        "groups": {f: int(g) for f, g in zip(fips, groups)},
        "group_vhb_means": group_means.tolist(),
        "vhb": {f: float(v) for f, v in zip(fips, vhb)},
        "planted_primary": "signal_primary",
        "collinear_pair": ["collinear_a", "collinear_b"],
        "seed": seed,
    })

    return {
        "vaccination": str(vaccination), "features": str(features), "adjacency": str(adjacency),
        "population": str(population), "tweets": str(tweets), "tones": str(tones),
        "lexicon": str(lexicon), "external": str(external), "base_geojson": str(base_layer),
        "truth": str(truth),
    }
