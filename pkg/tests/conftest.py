import numpy as np
import pytest

from hesitancy.panel import AdjacencyMap, CountyPanel, VaccinationSeries


@pytest.fixture
def three_county_files(tmp_path):
    """Minimal fully-joined fixture: 3 counties, 3 weeks, 2 features."""
    vacc = tmp_path / "vaccination.csv"
    vacc.write_text(
        "fips,week,pct_fully_vaccinated\n"
        "01001,4,0.10\n01001,5,0.20\n01001,6,0.30\n"
        "01003,4,0.15\n01003,5,0.25\n01003,6,0.35\n"
        "02013,4,0.05\n02013,5,0.06\n02013,6,0.40\n"
    )
    feats = tmp_path / "features.csv"
    feats.write_text(
        "fips,income,internet\n"
        "01001,50000,0.8\n"
        "01003,61000,0.9\n"
        "02013,43000,0.6\n"
    )
    (tmp_path / "features.csv.manifest.json").write_text(
        '{"week": 5, "features": {"income": {"kind": "static"}, "internet": {"kind": "dynamic"}}}'
    )
    adj = tmp_path / "adjacency.csv"
    adj.write_text("fips_a,fips_b\n01001,01003\n01003,02013\n")
    return {"vaccination": vacc, "features": [feats], "adjacency": adj}


def make_series(county, values, start_week=1):
    return VaccinationSeries(county=county, q={start_week + i: v for i, v in enumerate(values)})


def make_panel(counties, vaccination, feature_names=(), features=None, weeks=None):
    weeks = weeks or list(range(1, np.asarray(vaccination).shape[1] + 1))
    features = (np.zeros((len(counties), 0)) if features is None
                else np.asarray(features, dtype=float))
    return CountyPanel(
        counties=list(counties), weeks=list(weeks),
        vaccination=np.asarray(vaccination, dtype=float),
        feature_names=list(feature_names),
        feature_kinds={n: "static" for n in feature_names},
        features=features, feature_week=weeks[0],
    )


def make_adjacency(edges):
    neighbors = {}
    for a, b in edges:
        neighbors.setdefault(a, set()).add(b)
        neighbors.setdefault(b, set()).add(a)
    return AdjacencyMap(neighbors=neighbors)
