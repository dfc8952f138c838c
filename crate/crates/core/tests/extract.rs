#![cfg(feature = "extract")]

use std::path::PathBuf;

use viprof_core::extract::{extract_embeddings, NetLayer, Network};
use viprof_core::visual::{CATEGORY_DIM, HIDDEN_DIM};
use viprof_core::Layer;

fn stub() -> Network {
    Network {
        mean: [100.0, 110.0, 120.0],
        layers: vec![
            NetLayer::Pool { size: 1 },
            NetLayer::Tile { out: HIDDEN_DIM },
            NetLayer::Relu,
            NetLayer::Tile { out: CATEGORY_DIM },
            NetLayer::Softmax,
        ],
        hidden_layer: 2,
    }
}

fn solid(dir: &std::path::Path, name: &str, rgb: [u8; 3], w: u32, h: u32) -> PathBuf {
    let path = dir.join(name);
    image::RgbImage::from_pixel(w, h, image::Rgb(rgb)).save(&path).unwrap();
    path
}

#[test]
fn constant_image_matches_analytic_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = solid(dir.path(), "c.png", [200, 50, 120], 31, 17);
    let out = extract_embeddings(&stub(), &[("img".into(), path)]).unwrap();
    assert!(out.failures.is_empty());
    let hidden = out.vectors.iter().find(|v| v.layer == Layer::Hidden4096).unwrap();
    // Channel means minus network means: [100, -60, 0], tiled then rectified.
    for (i, v) in hidden.values.iter().enumerate() {
        let expected = [100.0, 0.0, 0.0][i % 3];
        assert!((v - expected).abs() < 1e-3, "{i}: {v}");
    }
    let scores = out.vectors.iter().find(|v| v.layer == Layer::Softmax1000).unwrap();
    let e = 100f64.exp();
    let z = 334.0 * e + 666.0;
    assert!((scores.values[0] as f64 - e / z).abs() < 1e-5);
}

#[test]
fn corrupt_file_becomes_failure_record() {
    let dir = tempfile::tempdir().unwrap();
    let a = solid(dir.path(), "a.png", [1, 2, 3], 8, 8);
    let b = dir.path().join("b.jpg");
    std::fs::write(&b, b"not an image").unwrap();
    let c = solid(dir.path(), "c.png", [9, 9, 9], 4, 4);
    let imgs = vec![("a".to_string(), a), ("b".to_string(), b), ("c".to_string(), c)];
    let out = extract_embeddings(&stub(), &imgs).unwrap();
    assert_eq!(out.vectors.len(), 4);
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].image_id, "b");
}

#[test]
fn network_json_round_trip() {
    let net = stub();
    let json = serde_json::to_string(&net).unwrap();
    assert_eq!(Network::from_json(&json).unwrap(), net);
    assert!(Network::from_json(r#"{"mean":[0,0,0],"layers":[{"type":"relu"}],"hidden_layer":0}"#).is_err());
}
