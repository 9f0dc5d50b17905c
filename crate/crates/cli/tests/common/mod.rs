#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

/// Runs the CLI in-process and returns its exit code.
pub fn oscguard(args: &[&str]) -> i32 {
    oscguard_cli::main_with_args(std::iter::once("oscguard").chain(args.iter().copied()))
}

pub fn oscguard_in(out: &Path, args: &[&str]) -> i32 {
    let mut v: Vec<&str> = args.to_vec();
    let out = out.to_str().expect("utf-8 temp path");
    v.extend(["--out", out]);
    oscguard(&v)
}

/// SHA-256 of every output file, ignoring machine-dependent timing: the
/// `timing` member of JSON documents and the timing table.
pub fn digest_dir(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("read output dir") {
        let path = entry.expect("dir entry").path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name == "timing.txt" {
            continue;
        }
        let bytes = std::fs::read(&path).expect("read output");
        let bytes = if name.ends_with(".json") {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).expect("valid json");
            if let Some(o) = v.as_object_mut() {
                o.remove("timing");
            }
            serde_json::to_vec(&v).unwrap()
        } else {
            bytes
        };
        out.insert(name, hex::encode(Sha256::digest(&bytes)));
    }
    out
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).expect("read json")).expect("valid json")
}
