use std::fs;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use seqmia::model_io::{load_model, save_model};
use seqmia::ToolError;
use seqmia_core::classifiers::{train, Classifier, ClassifierKind, ClassifierSpec, TrainingSet};
use seqmia_core::features::{FeatureOptions, Label};

fn data(rng: &mut StdRng, n: usize, width: usize) -> (Vec<Vec<f64>>, Vec<Label>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let row: Vec<f64> = (0..width).map(|_| rng.random::<f64>()).collect();
        let label = if row[0] + 0.3 * rng.random::<f64>() > 0.65 {
            Label::In
        } else {
            Label::Out
        };
        rows.push(row);
        labels.push(label);
    }
    (rows, labels)
}

#[test]
fn every_kind_predicts_identically_after_reload() {
    let schema = FeatureOptions::default().schema();
    let mut rng = StdRng::seed_from_u64(5);
    let (rows, labels) = data(&mut rng, 300, schema.len());
    let (vrows, vlabels) = data(&mut rng, 60, schema.len());
    let (probe, _) = data(&mut rng, 100, schema.len());
    let dir = tempfile::tempdir().unwrap();
    for kind in ClassifierKind::ALL {
        let model = train(
            &ClassifierSpec::new(kind, 9),
            &TrainingSet::new(&schema, &rows, &labels),
            Some(&TrainingSet::new(&schema, &vrows, &vlabels)),
        )
        .unwrap();
        let path = dir.path().join(format!("{kind}.json"));
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model, "{kind}");
        let a = model.predict_batch(&schema, &probe).unwrap();
        let b = back.predict_batch(&schema, &probe).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label, y.label, "{kind}");
            assert_eq!(x.score.to_bits(), y.score.to_bits(), "{kind}");
        }
    }
}

fn saved_model(dir: &std::path::Path) -> std::path::PathBuf {
    let schema = FeatureOptions::default().schema();
    let mut rng = StdRng::seed_from_u64(1);
    let (rows, labels) = data(&mut rng, 50, schema.len());
    let model = train(
        &ClassifierSpec::new(ClassifierKind::DecisionTree, 0),
        &TrainingSet::new(&schema, &rows, &labels),
        None,
    )
    .unwrap();
    let path = dir.join("m.json");
    save_model(&path, &model).unwrap();
    path
}

#[test]
fn version_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = saved_model(dir.path());
    let text = fs::read_to_string(&path)
        .unwrap()
        .replacen("\"version\": 1", "\"version\": 99", 1);
    fs::write(&path, text).unwrap();
    let e = load_model(&path).unwrap_err();
    assert!(matches!(e, ToolError::Corrupt { .. }), "{e}");
    assert!(e.to_string().contains("99"));
}

#[test]
fn truncated_or_foreign_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = saved_model(dir.path());
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
    assert!(matches!(load_model(&path), Err(ToolError::Corrupt { .. })));

    fs::write(&path, &bytes).unwrap();
    let text = String::from_utf8(bytes.clone())
        .unwrap()
        .replacen("seqmia-model", "something-else", 1);
    fs::write(&path, text).unwrap();
    assert!(matches!(load_model(&path), Err(ToolError::Corrupt { .. })));

    let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    v["model"]["unexpected"] = serde_json::json!(1);
    fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    assert!(matches!(load_model(&path), Err(ToolError::Corrupt { .. })));
}
