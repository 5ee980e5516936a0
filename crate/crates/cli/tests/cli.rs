use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::{json, Value};
use tempfile::TempDir;

fn catalog_fixture() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/sample_catalog.csv").to_string()
}

fn command(dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bannerforge"));
    for (k, _) in std::env::vars() {
        if k.starts_with("BANNERFORGE_") {
            cmd.env_remove(k);
        }
    }
    cmd.current_dir(dir).args(["--ledgers", "ledgers", "--image-store", "images"]);
    cmd
}

fn mock(dir: &Path, args: &[&str]) -> Output {
    command(dir).args(["--backend", "mock"]).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn ingested() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    stdout_json(&mock(dir.path(), &["ingest", "--catalog", &catalog_fixture()]));
    dir
}

fn ledger_lines(dir: &Path, file: &str) -> Vec<Value> {
    std::fs::read_to_string(dir.join("ledgers").join(file))
        .unwrap_or_default()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn run_pet_beds(dir: &Path, n: &str, extra: &[&str]) -> Output {
    let mut args = extra.to_vec();
    args.extend(["run", "--product-type", "pet beds", "--n", n, "--seed", "11"]);
    mock(dir, &args)
}

#[test]
fn ingest_then_stats() {
    let dir = ingested();
    assert!(dir.path().join("ledgers/catalog.jsonl").exists());
    let stats = stdout_json(&mock(dir.path(), &["stats"]));
    assert_eq!(stats["count"], 19);
    assert_eq!(stats["min"], 6);
    assert_eq!(stats["max"], 23);
}

#[test]
fn stats_without_a_catalog_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = mock(dir.path(), &["stats"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no catalog"));
}

#[test]
fn sample_is_reproducible() {
    let dir = ingested();
    let args = ["sample", "--product-type", "pet beds", "--n", "4", "--seed", "3"];
    let a = mock(dir.path(), &args);
    let b = mock(dir.path(), &args);
    assert_eq!(stdout_json(&a)["products"].as_array().unwrap().len(), 4);
    assert_eq!(a.stdout, b.stdout);
    let out = mock(dir.path(), &["sample", "--product-type", "rugs", "--n", "2", "--seed", "3"]);
    assert!(!out.status.success());
}

#[test]
fn five_products_give_fifteen_records() {
    let dir = ingested();
    let summary = stdout_json(&run_pet_beds(dir.path(), "5", &[]));
    assert_eq!(summary["generated"], 15);
    assert_eq!(summary["failure_count"], 0);
    assert_eq!(ledger_lines(dir.path(), "generations.jsonl").len(), 15);
    assert_eq!(ledger_lines(dir.path(), "extractions.jsonl").len(), 5);

    // A second identical run has nothing left to do.
    let again = stdout_json(&run_pet_beds(dir.path(), "5", &[]));
    assert_eq!(again["generated"], 0);
    assert_eq!(again["skipped_existing"], 15);
    assert_eq!(ledger_lines(dir.path(), "generations.jsonl").len(), 15);
}

#[test]
fn one_failing_extraction_is_flagged_not_fatal() {
    let dir = ingested();
    let probe = stdout_json(&mock(dir.path(), &["sample", "--product-type", "pet beds", "--n", "5", "--seed", "11"]));
    let victim = probe["products"][0]["product_id"].as_str().unwrap().to_string();
    let summary = stdout_json(&run_pet_beds(dir.path(), "5", &["--mock-textgen-fail", &victim]));
    assert_eq!(summary["generated"], 14);
    assert_eq!(summary["failure_count"], 1);
    assert_eq!(summary["flagged_products"], json!([victim]));
    assert_eq!(summary["total_failure"], false);
    let failures = ledger_lines(dir.path(), "failures.jsonl");
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["stage"], "extract");
}

#[test]
fn unreachable_image_backend_exits_nonzero() {
    let dir = ingested();
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let out = command(dir.path())
        .env("BANNERFORGE_IMAGEGEN_BASE_URL", format!("http://127.0.0.1:{port}/generate"))
        .env("BANNERFORGE_RETRY_BASE_DELAY_MS", "0")
        .args(["--backend", "mock", "--imagegen-backend", "http"])
        .args(["run", "--product-type", "pet beds", "--n", "2", "--seed", "1", "--strategies", "PTYPE"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["total_failure"], true);
    assert_eq!(summary["failure_count"], 2);
    assert!(ledger_lines(dir.path(), "generations.jsonl").is_empty());
}

#[test]
fn invalid_config_is_rejected_at_start() {
    let dir = tempfile::tempdir().unwrap();
    let out = command(dir.path())
        .env("BANNERFORGE_IMAGEGEN_MAX_INFLIGHT", "0")
        .args(["--backend", "mock", "stats", "--catalog", &catalog_fixture()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_inflight"));

    // The flag wins over the environment.
    let out = command(dir.path())
        .env("BANNERFORGE_IMAGEGEN_MAX_INFLIGHT", "0")
        .args(["--backend", "mock", "--max-inflight", "2", "stats", "--catalog", &catalog_fixture()])
        .output()
        .unwrap();
    stdout_json(&out);
}

#[test]
fn config_file_and_env_layering() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        json!({"paths": {"catalog": catalog_fixture()}, "imagegen": {"defaults": {"width": 128, "height": 128}}})
            .to_string(),
    )
    .unwrap();
    let out = command(dir.path())
        .env("BANNERFORGE_IMAGEGEN_DEFAULTS_HEIGHT", "96")
        .args(["--config", config.to_str().unwrap(), "--backend", "mock"])
        .args(["run", "--product-type", "toys", "--n", "1", "--seed", "2", "--strategies", "PTYPE"])
        .output()
        .unwrap();
    stdout_json(&out);
    let records = ledger_lines(dir.path(), "generations.jsonl");
    assert_eq!(records[0]["params"]["width"], 128);
    assert_eq!(records[0]["params"]["height"], 96);

    std::fs::write(&config, r#"{"imagegen": {"colour": 1}}"#).unwrap();
    let out = command(dir.path())
        .args(["--config", config.to_str().unwrap(), "stats"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn extract_then_generate_single_image() {
    let dir = ingested();
    let out = mock(dir.path(), &["generate", "--product-id", "pb-02", "--strategy", "LLM", "--seed", "5"]);
    assert!(!out.status.success(), "LLM generation needs an extraction first");

    let extracted = stdout_json(&mock(dir.path(), &["extract", "--product-id", "pb-02", "--product-id", "rg-01"]));
    assert_eq!(extracted["extractions"].as_array().unwrap().len(), 2);
    assert_eq!(ledger_lines(dir.path(), "extractions.jsonl").len(), 2);

    let record = stdout_json(&mock(dir.path(), &["generate", "--product-id", "pb-02", "--strategy", "LLM", "--seed", "5"]));
    assert_eq!(record["strategy"], "LLM");
    assert_eq!(record["params"]["seed"], 5);
    let hash = record["image_hash"].as_str().unwrap();
    assert!(dir.path().join("images").join(&hash[..2]).join(format!("{hash}.png")).exists());

    let dup = mock(dir.path(), &["generate", "--product-id", "pb-02", "--strategy", "LLM", "--seed", "5"]);
    assert!(!dup.status.success());
    assert!(String::from_utf8_lossy(&dup.stderr).contains("already exists"));

    let out = mock(dir.path(), &["generate", "--product-id", "nope", "--strategy", "PTYPE"]);
    assert!(!out.status.success());
}

#[test]
fn extract_by_sample_records_failures() {
    let dir = ingested();
    let out = mock(
        dir.path(),
        &["--mock-textgen-fail", "vc-01", "extract", "--product-type", "video game controllers", "--n", "2", "--seed", "1"],
    );
    let v = stdout_json(&out);
    assert_eq!(v["extractions"].as_array().unwrap().len(), 1);
    assert_eq!(v["failures"][0]["product_id"], "vc-01");
    assert_eq!(ledger_lines(dir.path(), "failures.jsonl").len(), 1);
}

fn toy_model_args() -> [String; 4] {
    let assets = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/assets");
    [
        "--model".into(),
        format!("{assets}/toy_brisque.model"),
        "--range".into(),
        format!("{assets}/toy_brisque.range"),
    ]
}

#[test]
fn brisque_over_generated_images() {
    let dir = ingested();
    stdout_json(&run_pet_beds(dir.path(), "2", &[]));
    // Flatten the store into one directory as a user would hand it over.
    let flat = dir.path().join("flat");
    std::fs::create_dir(&flat).unwrap();
    for shard in std::fs::read_dir(dir.path().join("images")).unwrap() {
        for f in std::fs::read_dir(shard.unwrap().path()).unwrap() {
            let f = f.unwrap();
            std::fs::copy(f.path(), flat.join(f.file_name())).unwrap();
        }
    }
    std::fs::write(flat.join("broken.png"), b"not a png").unwrap();

    let mut args = vec!["evaluate".to_string(), "brisque".into(), "--images".into(), flat.display().to_string()];
    args.extend(toy_model_args());
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let v = stdout_json(&mock(dir.path(), &args));
    let per_image = v["per_image"].as_array().unwrap();
    assert_eq!(per_image.len(), 6);
    assert_eq!(v["failures"].as_array().unwrap().len(), 1);
    let scores: Vec<f64> = per_image.iter().map(|s| s["score"].as_f64().unwrap()).collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    assert!((v["mean"].as_f64().unwrap() - mean).abs() < 1e-9);
    for s in ["LLM", "PNAME", "PTYPE"] {
        assert_eq!(v["per_strategy"][s]["n"], 2, "{s}");
    }
}

#[test]
fn brisque_without_model_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = mock(dir.path(), &["evaluate", "brisque", "--images", "."]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
}

#[test]
fn par_over_the_ledger() {
    let dir = ingested();
    stdout_json(&run_pet_beds(dir.path(), "3", &[]));
    let v = stdout_json(&mock(dir.path(), &["evaluate", "par", "--threshold", "0.3"]));
    assert_eq!(v["prompts"].as_array().unwrap().len(), 9);
    let par = v["par"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&par));
    assert_eq!(v["threshold"], 0.3);

    let empty = tempfile::tempdir().unwrap();
    assert!(!mock(empty.path(), &["evaluate", "par"]).status.success());
}

#[test]
fn personalize_picks_by_cohort() {
    let dir = ingested();
    let affinities = dir.path().join("affinities.jsonl");
    std::fs::write(
        &affinities,
        concat!(
            r#"{"user_id": "u1", "affinities": {"gamer": 0.9, "pet-owner": 0.2}}"#,
            "\n",
            r#"{"user_id": "u2", "affinities": {"kids": 0.1, "home-decor": 0.4}}"#,
            "\n",
        ),
    )
    .unwrap();
    let v = stdout_json(&mock(dir.path(), &["personalize", "--affinities", affinities.to_str().unwrap()]));
    let picks: Vec<(&str, &str)> = v["selections"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s["user_id"].as_str().unwrap(), s["product_id"].as_str().unwrap()))
        .collect();
    assert_eq!(picks, [("u1", "vc-01"), ("u2", "rg-01")]);

    let v = stdout_json(&mock(
        dir.path(),
        &["personalize", "--affinities", affinities.to_str().unwrap(), "--product-type", "pet beds"],
    ));
    assert_eq!(v["selections"][0]["product_id"], "pb-01");
    assert_eq!(v["selections"][1]["affinity_used"], 0.0);
}

struct Serving(Child);

impl Drop for Serving {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn survey_serve_rate_and_report() {
    let dir = ingested();
    stdout_json(&run_pet_beds(dir.path(), "3", &[]));

    let mut child = command(dir.path())
        .args(["--backend", "mock", "survey", "serve", "--port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let stdout = child.stdout.take().unwrap();
    let server = Serving(child);
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line).unwrap();
    let hello: Value = serde_json::from_str(&line).unwrap();
    assert_eq!(hello["tasks"], 3);
    let base = hello["listening"].as_str().unwrap().to_string();

    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ledgers/survey.json")).unwrap()).unwrap();
    let mut strategy_of: BTreeMap<String, String> = BTreeMap::new();
    for task in manifest["tasks"].as_array().unwrap() {
        for (s, h) in task["images"].as_object().unwrap() {
            strategy_of.insert(h.as_str().unwrap().to_string(), s.clone());
        }
    }

    let http = reqwest::blocking::Client::new();
    let ratings = ["low", "medium", "high"];
    let mut expected: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (r, rater) in ["ana", "ben"].iter().enumerate() {
        let view: Value = http
            .get(format!("{base}/api/survey?rater_id={rater}"))
            .send()
            .unwrap()
            .json()
            .unwrap();
        let body = view.to_string();
        assert!(!body.contains("LLM") && !body.contains("PNAME") && !body.contains("PTYPE"));
        for (t, task) in view["tasks"].as_array().unwrap().iter().enumerate() {
            for slot in task["slots"].as_array().unwrap() {
                let n = slot["slot"].as_u64().unwrap() as usize;
                let k = (r + t + n) % 3;
                let resp = http
                    .post(format!("{base}/api/ratings"))
                    .json(&json!({
                        "rater_id": rater,
                        "product_id": task["product_id"],
                        "method_slot": n,
                        "rating": ratings[k],
                    }))
                    .send()
                    .unwrap();
                assert_eq!(resp.status(), 201);
                let strategy = &strategy_of[slot["image_hash"].as_str().unwrap()];
                expected.entry(strategy.clone()).or_default().push((k + 1) as f64);
            }
        }
    }
    let live: Value = http.get(format!("{base}/api/report")).send().unwrap().json().unwrap();
    drop(server);

    let report = stdout_json(&mock(dir.path(), &["survey", "report"]));
    assert_eq!(report["submissions"], 18);
    for (s, values) in &expected {
        assert_eq!(values.len(), 6);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let got = report["methods"][s]["score"]["mean"].as_f64().unwrap();
        assert!((got - mean).abs() < 1e-12, "{s}: {got} vs {mean}");
        assert_eq!(live["methods"][s]["score"]["mean"], report["methods"][s]["score"]["mean"]);
    }

    let table = mock(dir.path(), &["survey", "report", "--table"]);
    assert!(table.status.success());
    let text = String::from_utf8(table.stdout).unwrap();
    assert!(text.starts_with("Method   Mean score Std. dev.\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn survey_serve_needs_generated_images() {
    let dir = ingested();
    let out = mock(dir.path(), &["survey", "serve", "--port", "0"]);
    assert!(!out.status.success());
}
