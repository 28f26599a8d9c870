#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_groundkit");

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("GROUNDKIT_LOG", "off")
        .output()
        .expect("spawn groundkit")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "groundkit {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two images; five questions: three grounded to one object (q1, q2, q5),
/// one to two objects (q3), one to an object missing from its graph (q4).
pub const GQA_SCENE_GRAPHS: &str = r#"{
    "img1": {"width": 500, "height": 375, "objects": {
        "o1": {"name": "chair", "x": 10, "y": 20, "w": 100, "h": 50, "attributes": [], "relations": []},
        "o2": {"name": "table", "x": 200, "y": 100, "w": 80, "h": 60}
    }},
    "img2": {"width": 640, "height": 480, "objects": {
        "o3": {"name": "dog", "x": 5, "y": 5, "w": 30, "h": 30}
    }}
}"#;

pub const GQA_QUESTIONS: &str = r#"{
    "q5": {"imageId": "img1", "question": "What is near the table?", "answer": "chair",
           "annotations": {"question": {"4": "o2"}, "answer": {"0": "o1"}, "fullAnswer": {}}},
    "q1": {"imageId": "img1", "question": "What can you sit on?", "answer": "chair",
           "annotations": {"answer": {"0": "o1"}}},
    "q2": {"imageId": "img2", "question": "Which animal is this?", "answer": "dog",
           "annotations": {"question": {"2": "o3"}, "answer": {}}},
    "q3": {"imageId": "img1", "question": "What furniture is it?", "answer": "chair",
           "annotations": {"answer": {"0": "o1", "2": "o2"}}},
    "q4": {"imageId": "img2", "question": "What is flying?", "answer": "bird",
           "annotations": {"answer": {"0": "o99"}}}
}"#;
