use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

pub const BIN: &str = env!("CARGO_BIN_EXE_stylesearch");

pub fn run(args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN)
        .args(args)
        .env_remove("STYLESEARCH_ROOT")
        .output()
        .map_err(|e| format!("spawning {BIN}: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "`stylesearch {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Synthesizes a corpus under `root` and runs every training and indexing
/// command plus an evaluation on it.
pub fn pipeline(root: &Path, seed: u64) -> Result<(), String> {
    let r = root.to_str().unwrap();
    let s = seed.to_string();
    let p = |rel: &str| root.join(rel).to_string_lossy().into_owned();
    run(&["--seed", &s, "synth", "--out", r])?;
    run(&["ingest", "--corpus", r, "--check"])?;
    run(&["--seed", &s, "build-index", "--corpus", r])?;
    run(&["--seed", &s, "bovw", "train", "--corpus", r, "--k", "32"])?;
    run(&["--seed", &s, "bovw", "encode", "--corpus", r, "--out", &p("artifacts/bovw.bin")])?;
    run(&["--seed", &s, "train-embeddings", "--corpus", r, "--report-clusters", &p("labels.json")])?;
    run(&["--seed", &s, "train-encoder", "--corpus", r])?;
    run(&[
        "--seed",
        &s,
        "train-encoder",
        "--corpus",
        r,
        "--variant",
        "recurrent",
        "--epochs",
        "40",
        "--out",
        &p("artifacts/encoder-gru.ssqe"),
    ])?;
    run(&["detect-filter", &p("detections/r000.txt"), "--out", &p("artifacts/r000.kept.txt")])?;
    run(&[
        "--seed",
        &s,
        "evaluate",
        "--corpus",
        r,
        "--out",
        &p("reports/eval.json"),
        "--table",
        &p("reports/eval.txt"),
        "--curves",
        &p("reports/curves.csv"),
    ])?;
    Ok(())
}

/// Relative path to contents of every file below `root`.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                out.insert(path.strip_prefix(base).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// A running `serve` process, killed on drop.
pub struct Server {
    child: Child,
    pub base: String,
}

impl Server {
    pub fn start(root: &Path) -> Result<Server, String> {
        let mut child = Command::new(BIN)
            .args(["serve", "--corpus", root.to_str().unwrap(), "--addr", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let stdout = child.stdout.take().unwrap();
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line).map_err(|e| e.to_string())?;
        match line.trim().strip_prefix("listening on ") {
            Some(base) => Ok(Server {
                child,
                base: base.to_string(),
            }),
            None => {
                let _ = child.kill();
                let _ = child.wait();
                Err(format!("unexpected first line {line:?}"))
            }
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
