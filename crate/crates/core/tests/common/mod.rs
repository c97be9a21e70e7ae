#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes one result line to the real stderr, bypassing the test harness
/// capture so it always shows in the log.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {id:>2} [{}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

pub fn cli(args: &[&str]) -> i32 {
    censorbounds::cli::run(std::iter::once("censorbounds").chain(args.iter().copied()))
}

pub fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// A 170-row trial-shaped file: age, three binary markers, two arms, a
/// marker-driven treatment benefit and informative censoring.
pub fn write_trial_csv(dir: &Path, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::from("id,age,egfr,cdk4,myc,a,t_obs,censored\n");
    for i in 0..170 {
        let age: f64 = rng.random_range(35.0..80.0);
        let egfr = u8::from(rng.random::<f64>() < 0.5);
        let cdk4 = u8::from(rng.random::<f64>() < 0.4);
        let myc = u8::from(rng.random::<f64>() < 0.3);
        let a = u8::from(rng.random::<f64>() < 0.5);
        let benefit = if cdk4 == 1 && myc == 1 { 20.0 } else { 4.0 };
        let t = (30.0 - 0.1 * (age - 55.0) + f64::from(a) * benefit + rng.random_range(-6.0..6.0)).max(1.0);
        let p_censor = if egfr == 1 { 0.45 } else { 0.25 };
        let censored = rng.random::<f64>() < p_censor;
        let t_obs = if censored { t * rng.random_range(0.5..0.95) } else { t };
        text.push_str(&format!("p{i},{age:.1},{egfr},{cdk4},{myc},{a},{t_obs:.3},{}\n", u8::from(censored)));
    }
    let path = dir.join("trial.csv");
    std::fs::write(&path, text).unwrap();
    path
}

/// Every regular file under `dir`, relative path to contents, sorted.
pub fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
