use chrono::{Duration, NaiveDate};
use copula_dbn::baselines::{train_elm, train_mlp};
use copula_dbn::copula::{CopulaPair, DEFAULT_P};
use copula_dbn::dbn::{structure_search, train_dbn, TrainConfig};
use copula_dbn::ingest::{FeatureMatrix, FeatureRow, WIDTH_PLAIN, WIDTH_WITH_INDICATORS};
use copula_dbn::persist::{copula_from_json, copula_to_json, load_copulas, save_copulas, ModelDocument, TrainedModel};
use copula_dbn::seed::rng_from_seed;
use copula_dbn::synthgen::{gen_scenario, ScenarioConfig};
use copula_dbn::Error;
use rand::Rng;

fn features(rows: usize, with_indicators: bool, seed: u64) -> FeatureMatrix {
    let mut rng = rng_from_seed(seed);
    let t0 = NaiveDate::from_ymd_opt(2016, 6, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let width = if with_indicators {
        WIDTH_WITH_INDICATORS
    } else {
        WIDTH_PLAIN
    };
    FeatureMatrix {
        rows: (0..rows)
            .map(|i| {
                let mut inputs: Vec<f64> = (0..WIDTH_PLAIN).map(|_| rng.random_range(0.0..100.0)).collect();
                inputs.extend((WIDTH_PLAIN..width).map(|_| f64::from(rng.random_bool(0.1) as u8)));
                let target = 35_000.0 + 50.0 * inputs[0] + 30.0 * inputs[6] + 2_000.0 * inputs.get(12).unwrap_or(&0.0);
                FeatureRow {
                    timestamp: t0 + Duration::hours(i as i64),
                    inputs,
                    target,
                }
            })
            .collect(),
        with_indicators,
    }
}

fn models() -> Vec<TrainedModel> {
    let cfg = TrainConfig {
        pretrain_epochs: 5,
        max_finetune_epochs: 30,
        seed: 21,
        ..TrainConfig::default()
    };
    let plain = features(150, false, 1);
    let flagged = features(150, true, 2);
    vec![
        TrainedModel::Dbn(train_dbn(&flagged, &[9, 7, 5], &cfg).unwrap().0),
        TrainedModel::Dbn(train_dbn(&plain, &[6], &cfg).unwrap().0),
        TrainedModel::Mlp(train_mlp(&plain, &[8, 4], &cfg).unwrap().0),
        TrainedModel::Elm(train_elm(&flagged, 25, 3).unwrap()),
    ]
}

fn random_inputs(width: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..1000)
        .map(|_| (0..width).map(|_| rng.random_range(-50.0..150.0)).collect())
        .collect()
}

#[test]
fn reloaded_models_predict_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    for (k, model) in models().into_iter().enumerate() {
        let path = dir.path().join(format!("model{k}.json"));
        model.save(&path).unwrap();
        let loaded = TrainedModel::load(&path).unwrap();
        assert_eq!(loaded, model);
        for x in random_inputs(model.input_width(), k as u64) {
            assert_eq!(
                model.predict(&x).unwrap().to_bits(),
                loaded.predict(&x).unwrap().to_bits()
            );
        }
    }
}

#[test]
fn documents_are_stable_across_round_trips() {
    for model in models() {
        let text = model.to_json();
        assert_eq!(TrainedModel::from_json(&text).unwrap().to_json(), text);
    }
}

fn document_error(text: &str) -> String {
    match TrainedModel::from_json(text) {
        Err(Error::Document { field, .. }) => field,
        other => panic!("expected a document error, got {other:?}"),
    }
}

#[test]
fn corrupt_documents_name_the_field() {
    let model = &models()[0];
    let doc = model.to_document();

    let mut short_row = doc.clone();
    short_row.layers[1].weights[3].pop();
    assert_eq!(
        document_error(&serde_json::to_string(&short_row).unwrap()),
        "layers[1].weights[3]"
    );

    let mut bad_head = doc.clone();
    bad_head.head.weights.push(0.5);
    assert_eq!(
        document_error(&serde_json::to_string(&bad_head).unwrap()),
        "head.weights"
    );

    let mut bad_version = doc.clone();
    bad_version.version = 99;
    assert_eq!(document_error(&serde_json::to_string(&bad_version).unwrap()), "version");

    let mut bad_flag = doc.clone();
    bad_flag.with_indicators = false;
    assert_eq!(
        document_error(&serde_json::to_string(&bad_flag).unwrap()),
        "with_indicators"
    );

    let mut value: serde_json::Value = serde_json::to_value(&doc).unwrap();
    value.as_object_mut().unwrap().remove("target_scale");
    assert_eq!(document_error(&value.to_string()), "target_scale");

    let mut value: serde_json::Value = serde_json::to_value(&doc).unwrap();
    value["layers"][0]["bias"][2] = serde_json::Value::String("x".into());
    assert!(matches!(
        TrainedModel::from_json(&value.to_string()),
        Err(Error::Document { .. })
    ));
}

#[test]
fn document_carries_kind_architecture_and_seed() {
    for model in models() {
        let doc: ModelDocument = serde_json::from_str(&model.to_json()).unwrap();
        assert_eq!(doc.kind, model.kind());
        assert_eq!(doc.architecture, model.architecture());
        assert_eq!(doc.with_indicators, model.with_indicators());
        assert_eq!(doc.input_scale.len(), model.input_width());
    }
}

#[test]
fn copulas_round_trip() {
    let s = gen_scenario(&ScenarioConfig {
        days: 60,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let pair = CopulaPair::fit(&s, DEFAULT_P, None).unwrap();
    assert_eq!(copula_from_json(&copula_to_json(&pair)).unwrap(), pair);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copula.json");
    save_copulas(&pair, &path).unwrap();
    assert_eq!(load_copulas(&path).unwrap(), pair);

    let mut value: serde_json::Value = serde_json::from_str(&copula_to_json(&pair)).unwrap();
    value["price"]["alpha"] = serde_json::json!(0.5);
    match copula_from_json(&value.to_string()) {
        Err(Error::Document { field, .. }) => assert!(field.starts_with("price."), "{field}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        TrainedModel::load(dir.path().join("none.json")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn structure_search_stays_in_bounds_and_replays() {
    let s = gen_scenario(&ScenarioConfig {
        days: 200,
        seed: 3,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let f = copula_dbn::ingest::build_features(&s, None).unwrap();
    let cfg = TrainConfig {
        pretrain_epochs: 3,
        max_finetune_epochs: 20,
        seed: 4,
        ..TrainConfig::default()
    };
    let found = structure_search(&f, 2..=8, 1..=3, &cfg).unwrap();
    assert!((2..=8).contains(&found.width) && (1..=3).contains(&found.depth));
    assert_eq!(found.width_scan.len(), 7);
    assert_eq!(found.depth_scan.len(), 3);
    assert_eq!(found.hidden(), vec![found.width; found.depth]);
    assert_eq!(structure_search(&f, 2..=8, 1..=3, &cfg).unwrap(), found);

    let tiny = f.select(&(0..50).collect::<Vec<_>>());
    assert!(structure_search(&tiny, 2..=4, 1..=2, &cfg).is_err());
}
