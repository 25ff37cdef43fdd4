#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_micromobility"));
    cmd.env_remove("RUST_LOG");
    for (key, _) in std::env::vars() {
        if key.starts_with("MICROMOBILITY_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn subcommands_chain_and_run_log_reproduces_curve() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(bin()
        .args(["ingest", "--filter-defaults", "--input"])
        .arg(common::fixture_path())
        .arg("--out")
        .arg(d.join("trips.csv"))
        .arg("--report")
        .arg(d.join("ingest.json")));
    let report = json(&d.join("ingest.json"));
    let rejected: u64 = report["report"]["rows_rejected"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(report["report"]["rows_read"], 10_000);
    assert_eq!(report["report"]["rows_parsed"].as_u64().unwrap() + rejected, 10_000);
    let kept = fs::read_to_string(d.join("trips.csv")).unwrap().lines().count() - 1;
    assert_eq!(report["rows_kept"].as_u64().unwrap() as usize, kept);

    run(bin()
        .args(["profile", "--mode", "time-of-day", "--vehicle", "scooter", "--granularity", "per-period", "--input"])
        .arg(d.join("trips.csv"))
        .arg("--out")
        .arg(d.join("dataset.csv"))
        .arg("--summary")
        .arg(d.join("summary.csv")));
    let summary = fs::read_to_string(d.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 25);

    run(bin()
        .args(["cluster", "--k", "2", "--seed", "7", "--vehicle", "scooter", "--granularity", "per-period", "--in"])
        .arg(d.join("dataset.csv"))
        .arg("--out")
        .arg(d.join("model.json")));
    let model = json(&d.join("model.json"));
    assert_eq!(model["seed"], 7);
    assert_eq!(model["config"]["k"], 2);
    let sizes: u64 = model["clusters"].as_array().unwrap().iter().map(|c| c["size"].as_u64().unwrap()).sum();
    assert_eq!(sizes as usize, model["assignment"].as_array().unwrap().len());

    // small consensus run, then rebuild every M(k) from the logged runs
    let out = run(bin()
        .args(["consensus", "--k-min", "2", "--k-max", "4", "--resamples", "6", "--fraction", "0.5"])
        .args(["--vehicle", "scooter", "--granularity", "per-period", "--in"])
        .arg(d.join("dataset.csv"))
        .arg("--out")
        .arg(d.join("curve.json"))
        .arg("--csv")
        .arg(d.join("curve.csv"))
        .arg("--log")
        .arg(d.join("runs.jsonl")));
    let curve = json(&d.join("curve.json"));
    let chosen = curve["curve"]["chosen_k"].as_u64().unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains(&format!("chosen k = {chosen}")));

    let mut pairs: BTreeMap<u64, BTreeMap<(u64, u64), (u32, u32)>> = BTreeMap::new();
    for line in fs::read_to_string(d.join("runs.jsonl")).unwrap().lines() {
        let run: Value = serde_json::from_str(line).unwrap();
        let members: Vec<u64> = run["members"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        let assignment: Vec<u64> = run["assignment"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        let m = pairs.entry(run["k"].as_u64().unwrap()).or_default();
        for a in 0..members.len() {
            for b in a + 1..members.len() {
                let key = (members[a].min(members[b]), members[a].max(members[b]));
                let e = m.entry(key).or_default();
                e.0 += 1;
                e.1 += u32::from(assignment[a] == assignment[b]);
            }
        }
    }
    let points = curve["curve"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    for p in points {
        let k = p["k"].as_u64().unwrap();
        let mut entries: Vec<f64> = pairs[&k].values().map(|&(co, same)| f64::from(same) / f64::from(co)).collect();
        entries.sort_by(f64::total_cmp);
        // area under the step CDF, one entry at a time
        let n = entries.len() as f64;
        let mut area = 0.0;
        for i in 1..entries.len() {
            let at_or_below = entries.partition_point(|&y| y <= entries[i]) as f64;
            area += (entries[i] - entries[i - 1]) * at_or_below / n;
        }
        assert!((area - p["area"].as_f64().unwrap()).abs() < 1e-12, "k = {k}");
    }

    let csv_text = fs::read_to_string(d.join("curve.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    for (rec, p) in reader.records().zip(points) {
        let rec = rec.unwrap();
        assert_eq!(rec[1].parse::<f64>().unwrap(), p["area"].as_f64().unwrap());
        assert_eq!(rec[2].parse::<f64>().unwrap(), p["delta"].as_f64().unwrap());
    }
}

#[test]
fn env_overrides_config_file_and_flags_override_env() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    fs::write(
        &config,
        format!("input = {}\nvehicles = bicycle\nmodes = day_of_week\nk = 3\nseed = 1\n", common::fixture_path().display()),
    )
    .unwrap();

    run(bin().arg("analyze").arg("--config").arg(&config).arg("--out").arg(dir.path().join("a")).env("MICROMOBILITY_SEED", "9"));
    let manifest = json(&dir.path().join("a/manifest.json"));
    assert_eq!(manifest["metadata"]["seed"], 9);
    assert_eq!(manifest["analyses"][0]["k"], 3);
    assert_eq!(manifest["analyses"][0]["k_source"], "fixed");
    assert_eq!(manifest["analyses"].as_array().unwrap().len(), 1);

    run(bin()
        .arg("analyze")
        .arg("--config")
        .arg(&config)
        .args(["--seed", "4", "--k", "2", "--out"])
        .arg(dir.path().join("b"))
        .env("MICROMOBILITY_SEED", "9"));
    let manifest = json(&dir.path().join("b/manifest.json"));
    assert_eq!(manifest["metadata"]["seed"], 4);
    assert_eq!(manifest["analyses"][0]["k"], 2);
}

#[test]
fn failures_name_the_stage_and_leave_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();

    let out = bin().args(["analyze", "--input", "/no/such/file.csv", "--out"]).arg(dir.path().join("x")).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ingest stage failed"), "{stderr}");
    assert!(stderr.contains("/no/such/file.csv"), "{stderr}");

    let out = bin().args(["analyze", "--input", "x.csv", "--k", "1"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config stage failed"));

    let out = bin().args(["analyze", "--input", "x.csv"]).env("MICROMOBILITY_BOGUS", "1").output().unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    // no scooter rows at all: the profile stage fails after ingest succeeded
    let csv = dir.path().join("bikes.csv");
    fs::write(
        &csv,
        "ID,Device ID,Vehicle Type,Trip Duration,Trip Distance,Start Time,End Time\n\
         1,d,bicycle,600,2000,04/02/2019 08:00:00 AM,\n\
         2,d,bicycle,700,2500,04/06/2019 09:00:00 PM,\n",
    )
    .unwrap();
    let target = dir.path().join("partial");
    let out = bin().args(["analyze", "--k", "2", "--input"]).arg(&csv).arg("--out").arg(&target).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("profile stage failed"));
    let leftovers: Vec<_> = fs::read_dir(&target).map(|d| d.collect()).unwrap_or_default();
    assert!(leftovers.is_empty());
}
