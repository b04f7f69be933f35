use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::mpsc;
use std::thread;

use symptomclip::knowledge::{
    build_kb, load_kb, parse_symptoms, save_kb, DescriptorSource, KnowledgeError, LlmClient, LlmConfig,
    PromptRequest, PromptTemplate, PromptVariant, ResponseCache,
};

fn fixture_cache() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/llm-cache")
}

fn offline_client() -> LlmClient {
    LlmClient::new(LlmConfig { offline: true, ..Default::default() }, ResponseCache::new(fixture_cache()))
}

fn cats(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[test]
fn build_from_fixture_cache() {
    let client = offline_client();
    let kb = build_kb("tb", &cats(&["Normal lungs", "Tuberculosis"]), &PromptTemplate::designed(), &client).unwrap();
    assert_eq!(kb.class_ids().collect::<Vec<_>>(), ["normal_lungs", "tuberculosis"]);
    for c in &kb.classes {
        assert!(!c.symptoms.is_empty());
        assert_eq!(c.source, DescriptorSource::Llm);
        assert!(c.raw_response.as_deref().is_some_and(|r| r.contains(&c.symptoms[0])));
    }
    assert_eq!(
        &kb.classes[0].symptoms[..3],
        ["No visible cavities or consolidations", "Absence of pleural effusions", "Clear and distinct lung borders"]
    );
    assert_eq!(kb.prompt_variant(), Some(PromptVariant::Designed));
    assert_eq!(client.network_calls(), 0);
    assert_eq!(client.cache_hits(), 2);
}

#[test]
fn fixture_phrases_from_explainability_cases() {
    let client = offline_client();
    let kb = build_kb(
        "mixed",
        &cats(&["Severe Nonproliferative Retinopathy", "Proliferative Retinopathy", "Pneumonia"]),
        &PromptTemplate::designed(),
        &client,
    )
    .unwrap();
    assert_eq!(&kb.classes[0].symptoms[..2], ["Venous beading and loops", "Neovascularization"]);
    assert_eq!(
        &kb.classes[1].symptoms[..3],
        ["Fibrous proliferation", "Tractional retinal detachment", "Vitreous hemorrhage"]
    );
    assert_eq!(kb.classes[2].symptoms[0], "Air bronchogram sign");
}

#[test]
fn baseline_variant_recorded() {
    let kb = build_kb("bp", &cats(&["Tuberculosis"]), &PromptTemplate::baseline(), &offline_client()).unwrap();
    assert_eq!(kb.classes.len(), 1);
    assert_eq!(kb.classes[0].prompt_id, "baseline-v1");
    assert_eq!(kb.prompt_variant(), Some(PromptVariant::Baseline));
}

#[test]
fn duplicate_categories_rejected() {
    let err = build_kb("x", &cats(&["Pneumonia", "Pneumonia"]), &PromptTemplate::designed(), &offline_client())
        .unwrap_err();
    assert!(matches!(err, KnowledgeError::DuplicateCategory(_)), "{err}");
}

#[test]
fn failing_class_is_named_and_nothing_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kb.json");
    let err = build_kb("x", &cats(&["Tuberculosis", "Sarcoidosis"]), &PromptTemplate::designed(), &offline_client())
        .and_then(|kb| save_kb(&kb, &out))
        .unwrap_err();
    match &err {
        KnowledgeError::Class { class, source } => {
            assert_eq!(class, "Sarcoidosis");
            assert!(matches!(**source, KnowledgeError::Transport(_)));
        }
        other => panic!("unexpected {other}"),
    }
    assert!(err.is_llm_failure());
    assert!(!out.exists());
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let kb = build_kb("idrid", &cats(&["No Diabetic Retinopathy", "Proliferative Retinopathy"]), &PromptTemplate::designed(), &offline_client())
        .unwrap()
        .with_dataset("idrid");
    let path = dir.path().join("nested/kb.json");
    save_kb(&kb, &path).unwrap();
    assert_eq!(load_kb(&path).unwrap(), kb);
}

#[test]
fn shipped_fixtures_all_parse() {
    for entry in std::fs::read_dir(fixture_cache()).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let phrases = parse_symptoms(v["response"].as_str().unwrap()).unwrap();
        assert!(phrases.len() >= 3, "{}", v["category"]);
        assert!(v["provenance"].as_str().unwrap().contains("fixture"));
    }
}

/// Serves `replies` in order, sending each raw request back over `tx`.
fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0; len];
            reader.read_exact(&mut payload).unwrap();
            head.push_str(&String::from_utf8(payload).unwrap());
            tx.send(head).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1/chat/completions"), rx)
}

fn completion(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn live_endpoint_then_cache() {
    std::env::set_var("SYMPTOMCLIP_TEST_KEY_LIVE", "sk-test-123");
    let (endpoint, rx) = serve(vec![(200, completion("Features:\n1. Cavitation\n2. Upper lobe infiltrates"))]);
    let dir = tempfile::tempdir().unwrap();
    let cfg = LlmConfig { endpoint, api_key_env: "SYMPTOMCLIP_TEST_KEY_LIVE".into(), ..Default::default() };
    let client = LlmClient::new(cfg, ResponseCache::new(dir.path()));
    let prompt = PromptTemplate::designed().render("Tuberculosis").unwrap();
    let req = PromptRequest { template_id: "designed-v1", category: "Tuberculosis", prompt: &prompt };

    let first = client.query(&req).unwrap();
    let second = client.query(&req).unwrap();
    assert_eq!(first, second);
    assert_eq!(client.network_calls(), 1);
    assert_eq!(client.cache_hits(), 1);

    let sent = rx.recv().unwrap();
    assert!(sent.starts_with("POST /v1/chat/completions"));
    assert!(sent.to_ascii_lowercase().contains("authorization: bearer sk-test-123"));
    let body: serde_json::Value = serde_json::from_str(&sent[sent.find("\r\n\r\n").unwrap() + 4..]).unwrap();
    assert_eq!(body["model"], "gpt-3.5-turbo");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], prompt);

    for f in std::fs::read_dir(dir.path()).unwrap() {
        let text = std::fs::read_to_string(f.unwrap().path()).unwrap();
        assert!(!text.contains("sk-test-123"));
    }
}

#[test]
fn empty_completion_and_http_errors() {
    std::env::set_var("SYMPTOMCLIP_TEST_KEY_ERR", "k");
    let (endpoint, _rx) = serve(vec![(200, completion("  ")), (401, "{}".into())]);
    let dir = tempfile::tempdir().unwrap();
    let cfg = LlmConfig { endpoint, api_key_env: "SYMPTOMCLIP_TEST_KEY_ERR".into(), ..Default::default() };
    let client = LlmClient::new(cfg, ResponseCache::new(dir.path()));
    let req = PromptRequest { template_id: "t", category: "c", prompt: "p" };
    assert!(matches!(client.query(&req), Err(KnowledgeError::EmptyResponse)));
    assert!(matches!(client.query(&req), Err(KnowledgeError::Transport(_))));
    assert_eq!(std::fs::read_dir(dir.path()).map(|d| d.count()).unwrap_or(0), 0);
}

#[test]
fn unreachable_endpoint_cold_cache() {
    std::env::set_var("SYMPTOMCLIP_TEST_KEY_DOWN", "k");
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let dir = tempfile::tempdir().unwrap();
    let cfg = LlmConfig {
        endpoint: format!("http://127.0.0.1:{port}/v1/chat/completions"),
        api_key_env: "SYMPTOMCLIP_TEST_KEY_DOWN".into(),
        timeout_secs: 5,
        ..Default::default()
    };
    let client = LlmClient::new(cfg, ResponseCache::new(dir.path()));
    let err = client.query(&PromptRequest { template_id: "t", category: "c", prompt: "p" }).unwrap_err();
    assert!(matches!(err, KnowledgeError::Transport(_)), "{err}");
}

#[test]
fn missing_key_cold_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = LlmConfig { api_key_env: "SYMPTOMCLIP_TEST_KEY_UNSET".into(), ..Default::default() };
    let client = LlmClient::new(cfg, ResponseCache::new(dir.path()));
    let err = client.query(&PromptRequest { template_id: "t", category: "c", prompt: "p" }).unwrap_err();
    assert!(matches!(err, KnowledgeError::Transport(ref m) if m.contains("SYMPTOMCLIP_TEST_KEY_UNSET")));
    assert_eq!(client.network_calls(), 0);
}
