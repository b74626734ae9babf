#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn cerfuse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cerfuse"))
        .current_dir(dir)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .args(args)
        .output()
        .expect("spawn cerfuse")
}

/// Runs and asserts a zero exit.
pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = cerfuse(dir, args);
    assert!(
        out.status.success(),
        "cerfuse {:?} failed ({:?}):\n{}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn read_jsonl(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn probs(v: &serde_json::Value) -> Vec<f64> {
    v["probs"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

pub fn stream_line(video: &str, seg: u64, start: f64, end: f64, modality: &str, probs: &[f64]) -> String {
    serde_json::json!({
        "video_id": video,
        "segment_index": seg,
        "start_s": start,
        "end_s": end,
        "modality": modality,
        "probs": probs,
    })
    .to_string()
}

pub fn write(dir: &Path, name: &str, lines: &[String]) {
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(dir.join(name), text).unwrap();
}

pub fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub const STREAMS: [&str; 3] = ["stream_face.jsonl", "stream_audio.jsonl", "stream_text.jsonl"];

/// `--stream data/<s>` for each default synthetic stream.
pub fn stream_flags(data: &str) -> Vec<String> {
    STREAMS.iter().flat_map(|s| ["--stream".to_string(), format!("{data}/{s}")]).collect()
}
