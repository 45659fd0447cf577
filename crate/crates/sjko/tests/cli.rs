use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use sjko::checkpoint;
use sjko::csvio::read_cloud;

const SMALL: &str = r#"
task = "gmm25"
[train]
phases = 2
iters_per_phase = 10
batch_size = 32
[nets]
transport_hidden = [16, 16]
potential_hidden = [16, 16]
[output]
sample_size = 300
checkpoint_every = 1
"#;

fn sjko(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sjko"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_run(dir: &Path, name: &str) -> std::path::PathBuf {
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.join(name);
    let o = sjko(&["train", "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn small_training_run_writes_every_artifact_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = small_run(dir.path(), "run");
    assert!(start.elapsed().as_secs_f64() < 10.0);
    for f in [
        "config.toml",
        "trace.csv",
        "timing.csv",
        "metrics.csv",
        "checkpoint.sjko",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    for k in 1..=2 {
        let cloud = read_cloud(&out.join(format!("samples_phase_{k}.csv"))).unwrap();
        assert_eq!((cloud.len(), cloud.dim()), (300, 2));
    }
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 21);
    assert!(trace.starts_with("phase,iteration,loss_potential,loss_transport,r1\n"));
    let echo = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echo.contains("total iterations: 20"));
}

#[test]
fn reruns_produce_identical_traces_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_run(dir.path(), "a");
    let b = small_run(dir.path(), "b");
    for f in ["trace.csv", "metrics.csv", "samples_phase_2.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn checkpoint_round_trip_and_version_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), "run");
    let ck = out.join("checkpoint.sjko");
    let (_, trainer) = checkpoint::load(&ck).unwrap();
    assert_eq!(trainer.phase(), 2);

    let sample = dir.path().join("s.csv");
    let o = sjko(&[
        "sample",
        "--checkpoint",
        path(&ck),
        "--n",
        "50",
        "--seed",
        "3",
        "--out",
        path(&sample),
    ]);
    assert!(o.status.success());
    let cloud = read_cloud(&sample).unwrap();
    assert_eq!(cloud.points, trainer.sample(50, 3).unwrap().points);

    let mut bytes = std::fs::read(&ck).unwrap();
    bytes[4..8].copy_from_slice(&(checkpoint::FORMAT_VERSION + 1).to_le_bytes());
    let bumped = dir.path().join("bumped.sjko");
    std::fs::write(&bumped, &bytes).unwrap();
    let err = checkpoint::load(&bumped).err().unwrap().to_string();
    assert!(err.contains("version"), "{err}");
    let o = sjko(&[
        "sample",
        "--checkpoint",
        path(&bumped),
        "--n",
        "5",
        "--out",
        path(&sample),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let truncated = dir.path().join("truncated.sjko");
    std::fs::write(&truncated, &std::fs::read(&ck).unwrap()[..100]).unwrap();
    assert!(checkpoint::load(&truncated).is_err());
}

#[test]
fn zero_samples_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), "run");
    let o = sjko(&[
        "sample",
        "--checkpoint",
        path(&out.join("checkpoint.sjko")),
        "--n",
        "0",
        "--out",
        path(&dir.path().join("x.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--n"));
}

#[test]
fn resuming_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = small_run(dir.path(), "full");
    let resumed = dir.path().join("resumed");
    let o = sjko(&[
        "train",
        "--checkpoint",
        path(&full.join("checkpoint_phase_1.sjko")),
        "--out",
        path(&resumed),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, a) = checkpoint::load(&full.join("checkpoint.sjko")).unwrap();
    let (_, b) = checkpoint::load(&resumed.join("checkpoint.sjko")).unwrap();
    assert_eq!(a.transport_params(), b.transport_params());
    assert_eq!(a.potential_params(), b.potential_params());
    assert_eq!(
        std::fs::read(full.join("samples_phase_2.csv")).unwrap(),
        std::fs::read(resumed.join("samples_phase_2.csv")).unwrap()
    );
    let full_trace = std::fs::read_to_string(full.join("trace.csv")).unwrap();
    let tail = std::fs::read_to_string(resumed.join("trace.csv")).unwrap();
    assert!(full_trace.ends_with(
        tail.lines()
            .skip(1)
            .map(|l| format!("{l}\n"))
            .collect::<String>()
            .as_str()
    ));
}

#[test]
fn eval_scores_sampler_output_and_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = sjko_core::rng::StreamRng::new(0, 0);
    let cloud = sjko_core::datasets::sample_gmm25(2000, &mut rng).unwrap();
    let samples = dir.path().join("gmm.csv");
    sjko::csvio::write_cloud(&samples, &cloud).unwrap();
    let o = sjko(&["eval", "--task", "gmm25", "--samples", path(&samples)]);
    assert!(o.status.success());
    let report = std::fs::read_to_string(dir.path().join("gmm_eval.csv")).unwrap();
    assert!(report.contains("captured_modes,2.5000000000000000e1"), "{report}");

    let circles = sjko_core::datasets::sample_two_circles(2000, &mut rng).unwrap();
    let rings = dir.path().join("rings.csv");
    sjko::csvio::write_cloud(&rings, &circles).unwrap();
    let o = sjko(&["eval", "--task", "two-circles", "--samples", path(&rings)]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout).to_string();
    let near: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("fraction_near_rings = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(near >= 0.99);

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "x0,x1\n").unwrap();
    assert_eq!(
        sjko(&["eval", "--task", "gmm25", "--samples", path(&empty)])
            .status
            .code(),
        Some(2)
    );
    let wrong = dir.path().join("wrong.csv");
    std::fs::write(&wrong, "x0,x1,x2\n1,2,3\n").unwrap();
    assert_eq!(
        sjko(&["eval", "--task", "gmm25", "--samples", path(&wrong)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn ou_bench_reference_methods() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ou");
    let o = sjko(&[
        "ou-bench",
        "--methods",
        "analytic,em",
        "--seeds",
        "0,1",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("results.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["method", "d", "t", "sym_kl", "log10_sym_kl", "seed"]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    for row in &rows {
        let s: f64 = row[3].parse().unwrap();
        match &row[0] {
            "analytic" => assert_eq!(s, 0.0),
            "em" => assert!(s <= 0.01, "{s}"),
            m => panic!("{m}"),
        }
    }
    assert_eq!(
        sjko(&["ou-bench", "--methods", "bogus", "--out", path(&out)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn invalid_configurations_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    for body in [
        "[train]\nstep_size = -1.0\n",
        "[train]\nbogus = 1\n",
        "task = \"nope\"\n",
    ] {
        std::fs::write(&cfg, body).unwrap();
        let o = sjko(&["train", "--config", path(&cfg), "--out", path(&dir.path().join("x"))]);
        assert_eq!(o.status.code(), Some(2), "{body}");
    }
}

#[test]
fn numeric_blow_up_exits_with_code_three_and_keeps_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hot.toml");
    std::fs::write(
        &cfg,
        "task = \"gmm25\"\n[train]\nphases = 1\niters_per_phase = 400\nbatch_size = 16\nlr_transport = 1e6\nlr_potential = 1e6\n[nets]\ntransport_hidden = [8]\npotential_hidden = [8]\n",
    )
    .unwrap();
    let out = dir.path().join("hot");
    let o = sjko(&["train", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("trace.csv").exists());
}
