use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Stdio};

use specvi_core::trajectory::{parse_turn, write_jsonl, TrajectoryBuilder, ViewRef};
use specvi_core::WavelengthRange;

fn write_archive(dir: &Path) {
    let view = ViewRef {
        image_ref: "assets/a.g0/000.png".into(),
        range: WavelengthRange::new(3900.0, 9000.0).unwrap(),
        sample_count: 2551,
        label: None,
    };
    let trajectories: Vec<_> = ["a.g0", "b.g0"]
        .iter()
        .map(|id| {
            let mut b = TrajectoryBuilder::new(*id, "prompt", view.clone());
            let raw = r"<think>flat continuum</think><answer>\boxed{NO}</answer>";
            b.push_turn(raw, &parse_turn(raw), true);
            b.finish(false)
        })
        .collect();
    write_jsonl(dir.join("run.traj.jsonl"), &trajectories).unwrap();
}

/// Starts the service on an ephemeral port and returns it with its address.
fn start(archive: &Path, store: &Path) -> (Child, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_spec-harness"))
        .args(["serve", "--bind", "127.0.0.1:0", "--archive"])
        .arg(archive)
        .arg("--store")
        .arg(store)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").expect(&line).to_string();
    (child, addr)
}

fn request(addr: &str, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    let status = out[9..12].parse().unwrap();
    let body = out.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

#[test]
fn acknowledged_annotations_survive_kill() {
    let dir = tempfile::tempdir().unwrap();
    write_archive(dir.path());
    let store = dir.path().join("annotations.jsonl");

    let (mut child, addr) = start(dir.path(), &store);
    for (i, (tid, score)) in [("a.g0", 4), ("b.g0", 1), ("a.g0", 5)].iter().enumerate() {
        let body = format!(r#"{{"trajectory_id":"{tid}","annotator_id":"exp-{}","score":{score}}}"#, i % 2);
        let (status, _) = request(&addr, "POST", "/annotations", &body);
        assert_eq!(status, 201);
    }
    child.kill().unwrap();
    child.wait().unwrap();

    let (mut child, addr) = start(dir.path(), &store);
    let (status, csv) = request(&addr, "GET", "/export/scores.csv", "");
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(status, 200);
    for row in ["b.g0,exp-1,1", "a.g0,exp-0,5"] {
        assert!(csv.contains(row), "missing {row} in\n{csv}");
    }
    assert!(!csv.contains("a.g0,exp-0,4"), "overwritten score still exported:\n{csv}");
}
