import io

import numpy as np
import pytest

from survwright.schema import CohortSchema, FeatureSpec, OutcomeSpec


@pytest.fixture(scope="session")
def basic_schema() -> CohortSchema:
    """Small mixed-type schema used across cohort tests."""
    return CohortSchema(
        features=(
            FeatureSpec("age", "continuous", unit="years"),
            FeatureSpec("waist", "continuous"),
            FeatureSpec("hip", "continuous"),
            FeatureSpec("total_chol", "continuous"),
            FeatureSpec("hdl_chol", "continuous"),
            FeatureSpec("beer", "continuous"),
            FeatureSpec("wine", "continuous"),
            FeatureSpec("spirits", "continuous"),
            FeatureSpec("other_drinks", "continuous"),
            FeatureSpec("smoker", "binary"),
            FeatureSpec("pace", "categorical", categories=("slow", "steady", "brisk")),
            FeatureSpec("waist_hip_ratio", "derived", derivation="ratio",
                        inputs=("waist", "hip")),
            FeatureSpec("chol_ratio", "derived", derivation="ratio",
                        inputs=("total_chol", "hdl_chol")),
            FeatureSpec("total_alcohol", "derived", derivation="sum",
                        inputs=("beer", "wine", "spirits", "other_drinks")),
        ),
        outcome=OutcomeSpec(duration_column="duration_years", event_column="event"),
        id_column="sid",
    )


def csv_of(header: list[str], rows: list[list]) -> io.StringIO:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    return io.StringIO("\n".join(lines) + "\n")


@pytest.fixture(scope="session")
def paper_store(tmp_path_factory):
    """A paper-like synthetic store shared by pipeline-level tests."""
    from survwright.synth import generate_cohort_like_paper, paper_like_template

    out = tmp_path_factory.mktemp("paper_store")
    template = paper_like_template(n=4000, seed=20240301)
    generate_cohort_like_paper(template, out_dir=out)
    return out


def finite_diff_grad(fn, x, eps=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (fn(xp) - fn(xm)) / (2 * eps)
    return g
