"""Model bundles and the HTTP service: serialization round trips, the
serve-time preprocessing path against offline predictions, contribution
accounting, what-if deltas, variant invariants, and endpoint contracts."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from survwright.bundle import (
    BundleError,
    MissingFeaturesError,
    ModelBundle,
    deserialize_model,
    feature_descriptors,
    serialize_model,
    variant_schema,
)
from survwright.cohort import load_cohort
from survwright.cox import predict_risk as cox_predict_risk
from survwright.pipeline import (
    prepare_cohort,
    predict_test_risks,
    train_cox_bundle,
    train_neural_bundle,
)
from survwright.schema import CohortSchema
from survwright.service import bundle_id, create_app
from survwright.neural import HyperConfig


@pytest.fixture(scope="module")
def prepared(paper_store):
    schema = CohortSchema.load(paper_store / "schema.json")
    return prepare_cohort(paper_store / "cohort.csv", schema, seed=3)


@pytest.fixture(scope="module")
def cox_bundle(prepared):
    return train_cox_bundle(prepared, version="7")


@pytest.fixture(scope="module")
def digital_bundle(paper_store):
    schema = CohortSchema.load(paper_store / "schema.json")
    prep = prepare_cohort(paper_store / "cohort.csv", schema, variant="digital",
                          seed=3)
    return train_cox_bundle(prep, version="7d")


@pytest.fixture(scope="module")
def request_rows(paper_store):
    schema = CohortSchema.load(paper_store / "schema.json")
    raw = load_cohort(paper_store / "cohort.csv", schema)
    rows = []
    for i in range(len(raw.row_ids)):
        row = {name: raw.columns[name][i] for name in schema.raw_feature_names()}
        if all(v is not None for v in row.values()):
            rows.append(row)
        if len(rows) == 120:
            break
    return rows


class TestSerialization:
    def test_roundtrip_prediction_equality(self, cox_bundle, request_rows):
        doc = serialize_model(cox_bundle)
        again = deserialize_model(doc)
        for row in request_rows[:100]:
            a = cox_bundle.score(row)
            b = again.score(row)
            assert b["risk"] == a["risk"]
            assert b["contributions"] == a["contributions"]

    def test_neural_roundtrip(self, prepared, request_rows):
        config = HyperConfig(topology=(8,), learning_rate=0.005,
                             optimizer="adam", batch_norm=True, dropout=0.1)
        bundle = train_neural_bundle(prepared, config, seed=5, max_epochs=25)
        again = deserialize_model(serialize_model(bundle))
        for row in request_rows[:20]:
            assert again.score(row)["risk"] == bundle.score(row)["risk"]

    def test_corrupt_document_errors(self):
        with pytest.raises(BundleError, match="corrupt"):
            deserialize_model("{not json")

    def test_version_mismatch_needs_migration(self, cox_bundle):
        doc = cox_bundle.to_dict()
        doc["bundle_version"] = 99
        with pytest.raises(BundleError, match="migration"):
            ModelBundle.from_dict(doc)

    def test_digital_document_declares_variant(self, digital_bundle, tmp_path):
        path = tmp_path / "digital.json"
        digital_bundle.dump(path)
        doc = json.loads(path.read_text())
        assert doc["variant"] == "digital"
        loaded = ModelBundle.load(path)
        assert loaded.variant == "digital"


class TestVariantInvariant:
    def test_digital_has_no_cholesterol_or_sbp(self, digital_bundle):
        cols = digital_bundle.model_columns
        assert all("cholesterol" not in c for c in cols)
        assert "sbp" not in cols
        assert "heart_rate" in cols

    def test_tampered_digital_bundle_rejected_at_load(self, cox_bundle):
        doc = cox_bundle.to_dict()
        doc["variant"] = "digital"  # full schema smuggled in as digital
        with pytest.raises(BundleError, match="digital"):
            ModelBundle.from_dict(doc)

    def test_variant_schema_drops_dependent_derived(self, prepared):
        reduced = variant_schema(prepared.schema, "digital")
        names = set(reduced.feature_names)
        assert "total_cholesterol" not in names
        assert "cholesterol_ratio" not in names   # derived from excluded input
        assert "sbp" not in names
        assert "heart_rate" in names


class TestScoring:
    def test_contributions_sum_to_linear_predictor(self, cox_bundle, request_rows):
        for row in request_rows[:50]:
            resp = cox_bundle.score(row)
            total = sum(resp["contributions"].values())
            assert abs(total - resp["linear_predictor"]) < 1e-9

    def test_training_mean_profile_centers_continuous_model(self, prepared):
        # a model over plain continuous features only: z-scored columns are
        # exactly zero at the training means, so the linear predictor
        # vanishes there
        plain_continuous = [
            c for c, m in zip(prepared.train_design.column_names,
                              prepared.train_design.column_meta)
            if m.kind == "continuous"
            and prepared.schema.feature(m.source).kind == "continuous"
        ]
        bundle = train_cox_bundle(prepared, features=plain_continuous)
        mean_profile = {name: bundle.impute_stats[name]
                        for name in plain_continuous}
        resp = bundle.score(mean_profile, lenient=True)
        assert abs(resp["linear_predictor"]) < 1e-9

    def test_offline_equals_service_path(self, cox_bundle, prepared):
        # golden: the bundle's request path reproduces offline batch
        # prediction on the encoded test design
        risks_offline = predict_test_risks(cox_bundle, prepared, horizon=10.0)
        raw = prepared.test_raw
        n_checked = 0
        for i in range(len(raw.row_ids)):
            row = {name: raw.columns[name][i]
                   for name in prepared.schema.raw_feature_names()}
            if any(v is None for v in row.values()):
                continue
            resp = cox_bundle.score(row)
            assert resp["risk"] == pytest.approx(risks_offline[i], abs=1e-12)
            n_checked += 1
            if n_checked == 100:
                break
        assert n_checked == 100

    def test_positive_coefficient_raises_risk(self, cox_bundle, request_rows):
        beta = dict(zip(cox_bundle.model_columns, cox_bundle.model.beta))
        assert beta["pack_years"] > 0  # built into the generator template
        row = dict(request_rows[0])
        low = cox_bundle.score({**row, "pack_years": 0.0})["risk"]
        high = cox_bundle.score({**row, "pack_years": 40.0})["risk"]
        assert high > low

    def test_strict_missing_raises_listing_names(self, cox_bundle):
        with pytest.raises(MissingFeaturesError) as err:
            cox_bundle.score({"age": 60.0})
        assert "pack_years" in err.value.names

    def test_lenient_imputes_and_flags(self, cox_bundle):
        resp = cox_bundle.score({"age": 60.0}, lenient=True)
        assert 0 <= resp["risk"] <= 1
        assert any("imputed" in f for f in resp["flags"])

    def test_unknown_level_rejected(self, cox_bundle, request_rows):
        row = dict(request_rows[0], smoking_status="vaping")
        with pytest.raises(BundleError, match="vaping"):
            cox_bundle.score(row)


class TestWhatIf:
    def test_empty_overrides_delta_zero(self, cox_bundle, request_rows):
        out = cox_bundle.whatif(request_rows[0], {})
        assert out["delta"] == 0.0

    def test_binary_toggle_sign_matches_coefficient(self, cox_bundle, request_rows):
        beta = dict(zip(cox_bundle.model_columns, cox_bundle.model.beta))
        row = dict(request_rows[0], adds_salt=0)
        out = cox_bundle.whatif(row, {"adds_salt": 1})
        assert np.sign(out["delta"]) == np.sign(beta["adds_salt"])

    def test_quitting_smoking_lowers_risk(self, cox_bundle, request_rows):
        # the fitted current-smoker level carries a positive coefficient in
        # the generator's ground truth; switching current -> never must
        # lower the risk
        beta = dict(zip(cox_bundle.model_columns, cox_bundle.model.beta))
        assert beta["smoking_status=current"] > beta["smoking_status=never"]
        row = dict(request_rows[0], smoking_status="current")
        out = cox_bundle.whatif(row, {"smoking_status": "never"})
        assert out["delta"] < 0

    def test_unknown_override_rejected(self, cox_bundle, request_rows):
        with pytest.raises(BundleError, match="unknown override"):
            cox_bundle.whatif(request_rows[0], {"not_a_feature": 1})


class TestService:
    @pytest.fixture(scope="class")
    def client(self, cox_bundle, digital_bundle):
        app = create_app([cox_bundle, digital_bundle])
        return TestClient(app)

    def test_models_lists_variants(self, client):
        body = client.get("/v1/models").json()
        ids = {m["id"] for m in body["models"]}
        assert ids == {"cox-full-all", "cox-digital-all"}
        variants = {m["variant"] for m in body["models"]}
        assert variants == {"full", "digital"}

    def test_descriptors_tag_modifiable(self, client):
        body = client.get("/v1/models").json()
        model = next(m for m in body["models"] if m["variant"] == "digital")
        by_name = {f["name"]: f for f in model["features"]}
        assert by_name["smoking_status"]["modifiable"] is True
        assert by_name["smoking_status"]["options"] == ["never", "previous",
                                                        "current"]
        assert by_name["age"]["modifiable"] is False
        assert "total_cholesterol" not in by_name
        assert "sbp" not in by_name

    def test_score_echoes_version(self, client, request_rows):
        resp = client.post("/v1/score", json={
            "model": "cox-full-all", "features": request_rows[0]})
        assert resp.status_code == 200
        assert resp.json()["model_version"] == "7"

    def test_concurrent_identical_requests_identical(self, client, request_rows):
        import concurrent.futures

        payload = {"model": "cox-full-all", "features": request_rows[1]}
        with concurrent.futures.ThreadPoolExecutor(8) as pool:
            bodies = list(pool.map(
                lambda _: client.post("/v1/score", json=payload).content,
                range(16)))
        assert len(set(bodies)) == 1

    def test_whatif_wire_contract(self, client, request_rows):
        resp = client.post("/v1/whatif", json={
            "model": "cox-full-all",
            "features": dict(request_rows[0], smoking_status="current"),
            "overrides": {"smoking_status": "never"}})
        body = resp.json()
        assert set(body) == {"base", "modified", "delta"}
        assert body["delta"] == pytest.approx(
            body["modified"]["risk"] - body["base"]["risk"])

    def test_malformed_json_400_shape(self, client):
        resp = client.post("/v1/score", content=b"{oops",
                           headers={"content-type": "application/json"})
        assert resp.status_code == 400
        body = resp.json()
        assert set(body) == {"code", "message", "details"}

    def test_missing_features_422(self, client):
        resp = client.post("/v1/score", json={
            "model": "cox-full-all", "features": {"age": 55}})
        assert resp.status_code == 422
        assert resp.json()["code"] == "missing_features"
        assert "pack_years" in resp.json()["details"]["names"]

    def test_unknown_model_404(self, client):
        resp = client.post("/v1/score", json={"model": "nope", "features": {}})
        assert resp.status_code == 404

    def test_bundle_id_format(self, cox_bundle, digital_bundle):
        assert bundle_id(cox_bundle) == "cox-full-all"
        assert bundle_id(digital_bundle) == "cox-digital-all"

    def test_descriptor_fields(self, cox_bundle):
        for desc in feature_descriptors(cox_bundle):
            assert {"name", "kind", "label", "modifiable", "required"} <= set(desc)
