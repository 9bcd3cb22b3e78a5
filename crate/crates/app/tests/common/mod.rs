//! Helpers shared by the binary-level tests: running the CLI, the fixture
//! pipeline, and a served instance.
#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use serde_json::Value;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn e2e() -> PathBuf {
    fixtures().join("e2e")
}

#[derive(Debug)]
pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the binary with the fixture config and `store`.
pub fn datanav(store: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_datanav"))
        .arg("--config")
        .arg(e2e().join("config.toml"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("DATANAV_STORE")
        .output()
        .expect("spawn datanav");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Every source in the fixture directory, in a fixed order.
pub const SOURCES: [(&str, &str); 5] = [
    ("openbench", "sources/openbench"),
    ("visionhub", "sources/visionhub"),
    ("mirror", "sources/mirror"),
    ("legacy-archive", "sources/legacy"),
    ("arxiv-abstracts", "sources/abstracts.txt"),
];

/// ingest, entities, dedup, tag, linkcheck; returns each step's run.
pub fn pipeline(store: &Path, probe_base: &str) -> Vec<(String, Run)> {
    let mut steps = Vec::new();
    for (source, input) in SOURCES {
        let input = e2e().join(input);
        let run = datanav(store, &["ingest", "--source", source, "--input", input.to_str().unwrap()]);
        steps.push((format!("ingest {source}"), run));
    }
    let ents = e2e().join("entities.jsonl");
    steps.push(("entities".into(), datanav(store, &["entities", "load", ents.to_str().unwrap()])));
    steps.push(("dedup".into(), datanav(store, &["dedup"])));
    steps.push(("tag".into(), datanav(store, &["tag"])));
    steps.push(("linkcheck".into(), datanav(store, &["linkcheck", "--budget", "40", "--base-url", probe_base])));
    steps
}

/// A `datanav serve` child process on an ephemeral port.
pub struct Server {
    child: Child,
    pub base: String,
}

impl Server {
    pub fn start(store: &Path, extra: &[&str]) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_datanav"))
            .arg("--config")
            .arg(e2e().join("config.toml"))
            .arg("--store")
            .arg(store)
            .args(["serve", "--port", "0"])
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn server");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let base = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        Server { child, base }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn finish(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> (u16, Value) {
    let mut resp = resp.expect("request");
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    let v = serde_json::from_str(&text).unwrap_or_else(|e| panic!("non-JSON body ({e}): {text:?}"));
    (status, v)
}

pub fn get(url: &str) -> (u16, Value) {
    finish(agent().get(url).call())
}

pub fn post(url: &str, body: &str) -> (u16, Value) {
    finish(agent().post(url).header("content-type", "application/json").send(body))
}
