//! Byte-level pins for the files exchanged with external adapters.

use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::PathBuf;

use ndarray::array;
use ser_probe_core::lingfeats::{annotation_line, parse_annotations, Dependency, LinguisticAnnotation};
use ser_probe_core::manifest::{manifest_line, parse_manifest, LabelScale};
use ser_probe_core::probe::LayerEmbeddingArchive;
use ser_probe_core::{EmotionTriple, ModelVariant, Split, Utterance};

#[test]
fn manifest_line_layout() {
    let mut meta = BTreeMap::new();
    meta.insert("speaker".to_string(), "s1".to_string());
    let u = Utterance {
        id: "a1".into(),
        audio_path: PathBuf::from("wav/a1.wav"),
        text: Some("not bad".into()),
        split: Split::Dev,
        labels: Some(EmotionTriple::new(0.25, 0.5, 1.0).unwrap()),
        meta,
    };
    let line = manifest_line(&u);
    assert_eq!(
        line,
        r#"{"id":"a1","audio":"wav/a1.wav","text":"not bad","split":"dev","arousal":0.25,"valence":0.5,"dominance":1.0,"speaker":"s1"}"#
    );
    let back = parse_manifest(Cursor::new(line), LabelScale::Unit).unwrap();
    assert_eq!(back, vec![u]);

    let bare = r#"{"id":"b","audio":"/x/b.wav","split":"test"}"#;
    let b = parse_manifest(Cursor::new(bare), LabelScale::Unit).unwrap();
    assert_eq!(manifest_line(&b[0]), bare);
    assert!(b[0].labels.is_none() && b[0].text.is_none());

    let likert = r#"{"id":"c","audio":"c.wav","split":"train","arousal":7,"valence":1,"dominance":4}"#;
    let c = parse_manifest(Cursor::new(likert), LabelScale::Likert).unwrap();
    assert_eq!(c[0].labels, Some(EmotionTriple::new(1.0, 0.0, 0.5).unwrap()));
}

#[test]
fn annotation_line_layout() {
    let a = LinguisticAnnotation {
        tokens: vec!["not".into(), "bad".into()],
        pos_tags: vec!["RB".into(), "JJ".into()],
        constituency: "(ROOT (ADJP (RB not) (JJ bad)))".into(),
        dependencies: vec![Dependency {
            relation: "neg".into(),
            head: 2,
            dependent: 1,
        }],
    };
    let line = annotation_line("a1", &a);
    assert_eq!(
        line,
        r#"{"id":"a1","tokens":["not","bad"],"pos":["RB","JJ"],"parse":"(ROOT (ADJP (RB not) (JJ bad)))","deps":[["neg",2,1]]}"#
    );
    let back = parse_annotations(Cursor::new(format!("{line}\n"))).unwrap();
    assert_eq!(back, vec![("a1".to_string(), a)]);
}

#[test]
fn archive_layout() {
    let d = tempfile::tempdir().unwrap();
    let ar = LayerEmbeddingArchive::new(
        ModelVariant::Frozen,
        vec!["u0".into(), "u1".into()],
        vec![array![[1.0f32, -2.0], [0.5, 0.0]]],
    )
    .unwrap();
    ar.save(d.path()).unwrap();
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("meta.json")).unwrap()).unwrap();
    assert_eq!(
        meta,
        serde_json::json!({"variant": "frozen", "n_layers": 1, "dim": 2, "pooling": "mean", "ids": ["u0", "u1"]})
    );
    let bytes = fs::read(d.path().join("layer_00.f32")).unwrap();
    let expected: Vec<u8> = [1.0f32, -2.0, 0.5, 0.0].iter().flat_map(|v| v.to_le_bytes()).collect();
    assert_eq!(bytes, expected);

    // a writer other than us: hand-made files load
    let e = tempfile::tempdir().unwrap();
    fs::write(e.path().join("meta.json"), r#"{"variant":"finetuned","n_layers":1,"dim":1,"pooling":"mean","ids":["x"]}"#).unwrap();
    fs::write(e.path().join("layer_00.f32"), 3.5f32.to_le_bytes()).unwrap();
    let h = LayerEmbeddingArchive::load(e.path()).unwrap();
    assert_eq!(h.layer(0).unwrap()[[0, 0]], 3.5);
    fs::write(e.path().join("layer_00.f32"), [0u8; 3]).unwrap();
    assert!(LayerEmbeddingArchive::load(e.path()).is_err());
}
