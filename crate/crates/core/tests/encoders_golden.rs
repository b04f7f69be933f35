//! Cross-checks against the golden fixtures shipped with the test bundle.

use std::path::PathBuf;
use std::sync::OnceLock;

use serde::Deserialize;
use symptomclip::encoders::{sha256_file, EncoderBundle, EncoderError};
use symptomclip::{dot, Embedding};

#[derive(Deserialize)]
struct Golden {
    tokens: Vec<TokenFixture>,
    texts: Vec<TextFixture>,
    images: Vec<ImageFixture>,
}

#[derive(Deserialize)]
struct TokenFixture {
    text: String,
    ids: Vec<u32>,
}

#[derive(Deserialize)]
struct TextFixture {
    text: String,
    embedding: Vec<f32>,
}

#[derive(Deserialize)]
struct ImageFixture {
    image: String,
    tensor: String,
    tensor_sha256: String,
    shape: Vec<usize>,
    embedding: Vec<f32>,
}

fn bundle_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/tiny-clip")
}

fn bundle() -> &'static EncoderBundle {
    static BUNDLE: OnceLock<EncoderBundle> = OnceLock::new();
    BUNDLE.get_or_init(|| EncoderBundle::load(bundle_dir()).expect("test bundle loads"))
}

fn golden() -> Golden {
    let text = std::fs::read_to_string(bundle_dir().join("golden/golden.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn cosine(a: &[f32], b: &Embedding) -> f64 {
    let a = Embedding::unit(a.to_vec()).unwrap();
    dot(&a, b).unwrap()
}

fn read_f32(path: &std::path::Path) -> Vec<f32> {
    std::fs::read(path)
        .unwrap()
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

#[test]
fn token_ids_match_reference() {
    let b = bundle();
    for fx in golden().tokens {
        let seq = b.tokenize(&fx.text);
        assert_eq!(seq.ids(), fx.ids.as_slice(), "text {:?}", &fx.text[..fx.text.len().min(40)]);
    }
}

#[test]
fn empty_and_long_strings() {
    let b = bundle();
    let t = b.tokenizer();
    let empty = b.tokenize("");
    assert_eq!(empty.ids()[0], t.start_of_text());
    assert_eq!(empty.ids()[1], t.end_of_text());
    assert_eq!(empty.ids()[2..].len(), 75);
    assert!(empty.ids()[2..].iter().all(|&i| i == 0));

    let long = b.tokenize(&"pleural effusion ".repeat(500));
    assert_eq!(long.len(), 77);
    assert_eq!(long.ids()[76], t.end_of_text());
    assert_eq!(long.end_position(), 76);
}

#[test]
fn preprocessing_matches_reference_tensors() {
    let b = bundle();
    let dir = bundle_dir().join("golden");
    for fx in golden().images {
        let tensor_path = dir.join(&fx.tensor);
        assert_eq!(sha256_file(&tensor_path).unwrap(), fx.tensor_sha256);
        let expected = read_f32(&tensor_path);
        let raw = std::fs::read(dir.join(&fx.image)).unwrap();
        let t = b.preprocess(&raw).unwrap();
        assert_eq!(t.shape().to_vec(), fx.shape);
        let worst = t
            .data()
            .iter()
            .zip(&expected)
            .map(|(a, b)| (a - b).abs())
            .fold(0f32, f32::max);
        assert!(worst <= 1e-3, "{}: max abs diff {worst}", fx.image);
    }
}

#[test]
fn image_embeddings_match_reference() {
    let b = bundle();
    let dir = bundle_dir().join("golden");
    for fx in golden().images {
        let raw = std::fs::read(dir.join(&fx.image)).unwrap();
        let t = b.preprocess(&raw).unwrap();
        let e = b.encode_image(&t).unwrap();
        assert_eq!(e.dim(), 64);
        assert!((e.norm() - 1.0).abs() < 1e-4);
        let cos = cosine(&fx.embedding, &e);
        assert!(cos >= 0.999, "{}: cosine {cos}", fx.image);

        // determinism
        let again = b.encode_image(&t).unwrap();
        assert_eq!(
            e.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            again.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn text_embeddings_match_reference() {
    let b = bundle();
    let fixtures = golden().texts;
    let texts: Vec<String> = fixtures.iter().map(|f| f.text.clone()).collect();
    let embs = b.encode_texts(&texts).unwrap();
    assert_eq!(embs.len(), texts.len());
    for (fx, e) in fixtures.iter().zip(&embs) {
        let cos = cosine(&fx.embedding, e);
        assert!(cos >= 0.999, "{}: cosine {cos}", fx.text);
    }
}

#[test]
fn text_encoding_contracts() {
    let b = bundle();
    let one = b.encode_texts(&["No visible cavities or consolidations".to_string()]).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].dim(), 64);
    assert!((one[0].norm() - 1.0).abs() < 1e-4);

    let batch: Vec<String> = ["Tuberculosis", "Normal lungs", "Air bronchogram sign"]
        .map(String::from)
        .to_vec();
    let together = b.encode_texts(&batch).unwrap();
    for (text, e) in batch.iter().zip(&together) {
        let single = b.encode_texts(std::slice::from_ref(text)).unwrap();
        let cos = dot(e, &single[0]).unwrap();
        assert!(cos >= 0.99999, "{text}: {cos}");
    }

    let dup = b.encode_texts(&["Neovascularization".into(), "Neovascularization".into()]).unwrap();
    assert_eq!(dup[0], dup[1]);

    assert!(matches!(b.encode_texts(&[]), Err(EncoderError::EmptyBatch)));
}

#[test]
fn corrupt_image_is_decode_error() {
    let b = bundle();
    let err = b.preprocess(b"\x89PNG\r\n\x1a\nnot really").unwrap_err();
    assert!(matches!(err, EncoderError::Decode(_)));
}

#[test]
fn tampered_asset_fails_integrity_check() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(bundle_dir()).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
        }
    }
    let copy = EncoderBundle::load(dir.path()).unwrap();
    assert_eq!(copy.manifest().fingerprint(), bundle().manifest().fingerprint());

    let mut bytes = std::fs::read(dir.path().join("visual.onnx")).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    std::fs::write(dir.path().join("visual.onnx"), bytes).unwrap();
    let err = EncoderBundle::load(dir.path()).unwrap_err();
    assert!(matches!(err, EncoderError::Integrity { .. }), "{err}");
}

#[test]
fn concurrent_encoding_is_consistent() {
    let b = bundle();
    let text = vec!["Clear and distinct lung borders".to_string()];
    let reference = b.encode_texts(&text).unwrap();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..4).map(|_| s.spawn(|| b.encode_texts(&text).unwrap())).collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), reference);
        }
    });
}
