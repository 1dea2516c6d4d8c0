use std::path::Path;
use std::process::{Command, Output};

use dtml_core::data::{read_pgm, save_dataset, synth_subspace_dataset, Dataset, SynthSpec};
use dtml_core::linalg::Matrix;
use dtml_core::pipeline::{decompose, TrainParams};

fn dtml(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtml"))
        .args(args)
        .current_dir(dir)
        .env_remove("DTML_OUT_DIR")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn ok(out: &Output) {
    assert_eq!(
        code(out),
        0,
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

const SMALL: [&str; 9] = [
    "--synth",
    "--classes",
    "3",
    "--subspace-dim",
    "2",
    "--ambient-dim",
    "12",
    "--per-class",
    "8",
];

fn with_small<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(SMALL.iter()).chain(tail.iter()).copied().collect()
}

fn write_small_csv(dir: &Path) -> Dataset {
    let spec = SynthSpec {
        classes: 3,
        subspace_dim: 2,
        ambient_dim: 12,
        per_class: 8,
        noise_fraction: 0.0,
        ..SynthSpec::default()
    };
    let ds = synth_subspace_dataset(&spec).unwrap().dataset;
    save_dataset(&ds, dir.join("x.csv"), dir.join("y.txt")).unwrap();
    ds
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dtml(&["--help"], dir.path());
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    for word in ["bench", "ablate", "grid", "decompose", "Exit codes"] {
        assert!(text.contains(word), "help lacks {word}");
    }
    ok(&dtml(&["--version"], dir.path()));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&dtml(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&dtml(&["bench"], dir.path())), 1);
    let out = dtml(&["bench", "--synth", "--lambda3", "0"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda3"));
    assert_eq!(code(&dtml(&["bench", "--classes", "3"], dir.path())), 1);
    assert_eq!(code(&dtml(&["bench", "--synth", "--train-per-class", "0"], dir.path())), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.csv"), "1,2\n3,oops\n").unwrap();
    std::fs::write(dir.path().join("y.txt"), "0\n1\n").unwrap();
    let out = dtml(&["bench", "--data", "x.csv", "--labels", "y.txt"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("oops"));

    let missing = dtml(&["bench", "--data", "nope.csv", "--labels", "y.txt"], dir.path());
    assert_eq!(code(&missing), 2);

    std::fs::write(dir.path().join("x.csv"), "1,2\n3,4\n5,6\n").unwrap();
    let mismatch = dtml(&["bench", "--data", "x.csv", "--labels", "y.txt"], dir.path());
    assert_eq!(code(&mismatch), 2);
}

#[test]
fn bench_writes_report_convergence_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let args = with_small(&["bench"], &["--train-per-class", "4", "--repeats", "3", "--seed", "9", "--out", "run"]);
    ok(&dtml(&args, dir.path()));
    let run = dir.path().join("run");

    let report = read(run.join("report.csv"));
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "repeat,seed,train_per_class,mode,accuracy,iters_latlrr,sweeps_dtml,objective_final");
    assert_eq!(lines.len(), 4);
    for (r, line) in lines[1..].iter().enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], r.to_string());
        assert_eq!(f[1], (9 + r).to_string());
        assert_eq!(f[3], "full");
        let acc: f64 = f[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }

    let conv = read(run.join("convergence.csv"));
    let mut rows = conv.lines();
    assert_eq!(rows.next(), Some("repeat,sweep,objective,train_accuracy"));
    let mut last: Option<(usize, f64)> = None;
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let (repeat, obj): (usize, f64) = (f[0].parse().unwrap(), f[2].parse().unwrap());
        if let Some((prev_repeat, prev_obj)) = last {
            if prev_repeat == repeat {
                assert!(obj <= prev_obj + 1e-12, "objective rose in repeat {repeat}");
            }
        }
        last = Some((repeat, obj));
    }

    let summary: serde_json::Value = serde_json::from_str(&read(run.join("summary.json"))).unwrap();
    assert_eq!(summary["repeats"], 3);
    assert_eq!(summary["mode"], "full");
    assert_eq!(summary["config"]["seed_base"], 9);
}

#[test]
fn train_then_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = write_small_csv(dir.path());
    let train = dtml(
        &["train", "--data", "x.csv", "--labels", "y.txt", "--model", "m/model.json"],
        dir.path(),
    );
    ok(&train);
    assert!(String::from_utf8_lossy(&train.stdout).contains("training accuracy"));

    let predict = dtml(
        &["predict", "--model", "m/model.json", "--data", "x.csv", "--labels", "y.txt", "--out", "p.csv"],
        dir.path(),
    );
    ok(&predict);
    assert!(String::from_utf8_lossy(&predict.stdout).contains("accuracy 1.0000"));
    let preds = read(dir.path().join("p.csv"));
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("index,predicted,truth"));
    let rows: Vec<Vec<usize>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), ds.len());
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], i);
        assert_eq!(r[2], ds.labels[i]);
    }

    std::fs::write(dir.path().join("bad.json"), "{\"format\": 1}").unwrap();
    let bad = dtml(&["predict", "--model", "bad.json", "--data", "x.csv"], dir.path());
    assert_eq!(code(&bad), 2);
}

#[test]
fn decompose_writes_four_images_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let args = with_small(&["decompose"], &["--image-shape", "3x4", "--indices", "0,5,9,23", "--out", "img"]);
    ok(&dtml(&args, dir.path()));
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("img"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 16);
    assert_eq!(names[0], "sample_0000_noise.pgm");
    for name in &names {
        let pgm = read_pgm(dir.path().join("img").join(name)).unwrap();
        assert_eq!((pgm.height, pgm.width), (3, 4));
    }

    let no_shape = dtml(&with_small(&["decompose"], &["--indices", "0", "--out", "img2"]), dir.path());
    assert_eq!(code(&no_shape), 2);
    let out_of_range = dtml(
        &with_small(&["decompose"], &["--image-shape", "3x4", "--indices", "24", "--out", "img3"]),
        dir.path(),
    );
    assert_eq!(code(&out_of_range), 1);
}

#[test]
fn zero_dataset_decomposes_to_flat_images() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Dataset::new(Matrix::zeros(4, 6), vec![0, 0, 0, 1, 1, 1]).unwrap();
    save_dataset(&ds, dir.path().join("z.csv"), dir.path().join("z.txt")).unwrap();
    ok(&dtml(
        &["decompose", "--data", "z.csv", "--labels", "z.txt", "--image-shape", "2x2", "--indices", "0,4", "--out", "o"],
        dir.path(),
    ));
    for entry in std::fs::read_dir(dir.path().join("o")).unwrap() {
        let pgm = read_pgm(entry.unwrap().path()).unwrap();
        assert!(pgm.pixels.iter().all(|&p| p == pgm.pixels[0]));
    }
}

fn to_gray(col: &[f64]) -> Vec<u8> {
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    col.iter().map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8).collect()
}

#[test]
fn exported_images_show_parts_that_sum_to_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let ds = write_small_csv(dir.path());
    ok(&dtml(
        &["decompose", "--data", "x.csv", "--labels", "y.txt", "--image-shape", "3x4", "--indices", "7", "--out", "o"],
        dir.path(),
    ));
    let dec = decompose(&ds.x, &TrainParams::default()).unwrap();
    let sum = &dec.principal + &dec.salient + &dec.latlrr.e;
    assert!((&sum - &dec.x).norm() <= 1e-6 * dec.x.norm());
    for (part, m) in [("original", &dec.x), ("principal", &dec.principal), ("salient", &dec.salient)] {
        let pgm = read_pgm(dir.path().join(format!("o/sample_0007_{part}.pgm"))).unwrap();
        assert_eq!(pgm.pixels, to_gray(m.column(7).as_slice()), "{part}");
    }
}

#[test]
fn ablate_shares_splits_and_full_fit_is_lowest() {
    let dir = tempfile::tempdir().unwrap();
    let args = with_small(
        &["ablate"],
        &[
            "--train-sizes",
            "3,5",
            "--repeats",
            "2",
            "--lambda3",
            "0.5",
            "--lambda4",
            "0.5",
            "--fit-tol",
            "1e-14",
            "--fit-max-iter",
            "1000",
            "--out",
            "abl",
        ],
    );
    ok(&dtml(&args, dir.path()));
    let out = dir.path().join("abl");

    let table = read(out.join("ablation.csv"));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "mode,formula,train_3,train_5");
    assert!(lines[1].starts_with("salient-only,y-w2lx,"));
    assert!(lines[2].starts_with("shared-single,y-w(xz+lx),"));
    assert!(lines[3].starts_with("full,y-w1xz-w2lx,"));

    let report = read(out.join("report.csv"));
    let rows: Vec<Vec<&str>> = report.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 2 * 2);
    for k in ["3", "5"] {
        for r in ["0", "1"] {
            let group: Vec<&Vec<&str>> = rows.iter().filter(|f| f[0] == r && f[2] == k).collect();
            assert_eq!(group.len(), 3);
            assert!(group.iter().all(|f| f[1] == group[0][1] && f[5] == group[0][5]));
            let obj = |mode: &str| -> f64 { group.iter().find(|f| f[3] == mode).unwrap()[7].parse().unwrap() };
            let full = obj("full");
            assert!(full <= obj("salient-only") * (1.0 + 1e-9), "train {k} repeat {r}");
            assert!(full <= obj("shared-single") * (1.0 + 1e-9), "train {k} repeat {r}");
        }
    }
    for mode in ["full", "salient-only", "shared-single"] {
        for k in [3, 5] {
            assert!(out.join(format!("convergence_{mode}_train{k}.csv")).exists());
        }
    }
    let summary: serde_json::Value = serde_json::from_str(&read(out.join("summary.json"))).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 6);
}

#[test]
fn grid_writes_both_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    let args = with_small(&["grid"], &["--train-per-class", "5", "--grid", "0.01,1,100", "--out", "g"]);
    ok(&dtml(&args, dir.path()));
    let g = dir.path().join("g");
    let s1 = read(g.join("grid_stage1.csv"));
    let s2 = read(g.join("grid_stage2.csv"));
    assert!(s1.starts_with("lambda1,lambda2,score\n"));
    assert!(s2.starts_with("lambda3,lambda4,score\n"));
    assert_eq!(s1.lines().count(), 10);
    assert_eq!(s2.lines().count(), 10);
    let best: serde_json::Value = serde_json::from_str(&read(g.join("grid_best.json"))).unwrap();
    let top = s2
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best["stage2_score"].as_f64().unwrap(), top);
}

#[test]
fn flags_override_config_file_and_out_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "repeats = 2\nseed_base = 5\ntrain_per_class = 4\nlambda3 = 2.0\n\n[synth]\nclasses = 3\nsubspace_dim = 2\nambient_dim = 12\nper_class = 8\n",
    )
    .unwrap();

    // Environment variable when neither flag nor file sets the directory.
    let out = Command::new(env!("CARGO_BIN_EXE_dtml"))
        .args(["bench", "--config", "exp.toml", "--repeats", "3"])
        .current_dir(dir.path())
        .env("DTML_OUT_DIR", "from_env")
        .output()
        .unwrap();
    ok(&out);
    let report = read(dir.path().join("from_env/report.csv"));
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("0,5,4,full,"));
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path().join("from_env/summary.json"))).unwrap();
    assert_eq!(summary["config"]["lambda3"], 2.0);

    // File beats environment, flag beats file.
    std::fs::write(
        dir.path().join("exp2.toml"),
        "repeats = 1\nout_dir = \"from_file\"\n\n[synth]\nclasses = 3\nsubspace_dim = 2\nambient_dim = 12\nper_class = 8\n",
    )
    .unwrap();
    for (extra, expected) in [(vec![], "from_file"), (vec!["--out", "from_flag"], "from_flag")] {
        let mut args = vec!["bench", "--config", "exp2.toml", "--train-per-class", "4"];
        args.extend(extra);
        let out = Command::new(env!("CARGO_BIN_EXE_dtml"))
            .args(&args)
            .current_dir(dir.path())
            .env("DTML_OUT_DIR", "from_env2")
            .output()
            .unwrap();
        ok(&out);
        assert!(dir.path().join(expected).join("report.csv").exists(), "{expected}");
    }
    assert!(!dir.path().join("from_env2").exists());

    std::fs::write(dir.path().join("bad.toml"), "lambda9 = 1\n").unwrap();
    assert_eq!(code(&dtml(&["bench", "--config", "bad.toml", "--synth"], dir.path())), 1);
}

#[test]
fn default_out_dir_is_relative_to_working_directory() {
    let dir = tempfile::tempdir().unwrap();
    let args = with_small(&["bench"], &["--train-per-class", "4", "--repeats", "1"]);
    ok(&dtml(&args, dir.path()));
    assert!(dir.path().join("dtml-out/report.csv").exists());
}
