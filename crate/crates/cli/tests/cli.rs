use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cassi_cli::report::Report;
use cassi_cli::{CubeFile, Dtype};

fn cassi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cassi"))
        .args(args)
        .env_remove("CASSI_THREADS")
        .output()
        .expect("spawn cassi")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, file: &CubeFile) -> PathBuf {
    let path = dir.join(name);
    file.write(&path).unwrap();
    path
}

fn worked_instance(dir: &Path) -> (PathBuf, PathBuf) {
    let cube = write(
        dir,
        "cube.hsic",
        &CubeFile::new(
            2,
            2,
            2,
            Dtype::F64,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        ),
    );
    let mask = write(
        dir,
        "mask.hsic",
        &CubeFile::new(2, 2, 1, Dtype::F64, vec![1.0; 4]),
    );
    (cube, mask)
}

/// 16x16x4 scene from `scene`, Bernoulli mask made full rank, noiseless measurement.
fn suite_instance(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let cube = dir.join("scene.hsic");
    let raw = dir.join("raw_mask.hsic");
    let mask = dir.join("mask16.hsic");
    let meas = dir.join("meas16.hsic");
    let runs: [Vec<&str>; 4] = [
        vec![
            "scene",
            "--height",
            "16",
            "--width",
            "16",
            "--bands",
            "4",
            "--seed",
            "3",
            "--out",
            p(&cube),
        ],
        vec![
            "mask",
            "gen",
            "--height",
            "16",
            "--width",
            "16",
            "--seed",
            "5",
            "--out",
            p(&raw),
        ],
        vec![
            "mask",
            "repair",
            "--in",
            p(&raw),
            "--bands",
            "4",
            "--shift-step",
            "2",
            "--out",
            p(&mask),
        ],
        vec![
            "simulate",
            "--cube",
            p(&cube),
            "--mask",
            p(&mask),
            "--shift-step",
            "2",
            "--out",
            p(&meas),
        ],
    ];
    for args in runs {
        let out = cassi(&args);
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
    }
    (cube, mask, meas)
}

#[test]
fn simulate_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let (cube, mask) = worked_instance(dir.path());
    let out_path = dir.path().join("y.hsic");
    let out = cassi(&[
        "simulate",
        "--cube",
        p(&cube),
        "--mask",
        p(&mask),
        "--shift-step",
        "1",
        "--out",
        p(&out_path),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let y = CubeFile::read(&out_path).unwrap();
    assert_eq!((y.height, y.width, y.bands), (2, 3, 1));
    assert_eq!(y.data, vec![1.0, 7.0, 6.0, 3.0, 11.0, 8.0]);
}

#[test]
fn simulate_zero_cube_gives_zero_measurement() {
    let dir = tempfile::tempdir().unwrap();
    let cube = write(
        dir.path(),
        "z.hsic",
        &CubeFile::new(3, 4, 2, Dtype::F32, vec![0.0; 24]),
    );
    let mask = write(
        dir.path(),
        "m.hsic",
        &CubeFile::new(3, 4, 1, Dtype::F32, vec![1.0; 12]),
    );
    let y_path = dir.path().join("y.hsic");
    let out = cassi(&[
        "simulate",
        "--cube",
        p(&cube),
        "--mask",
        p(&mask),
        "--shift-step",
        "2",
        "--out",
        p(&y_path),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let y = CubeFile::read(&y_path).unwrap();
    assert_eq!(y.width, 6);
    assert!(y.data.iter().all(|&v| v == 0.0));
}

#[test]
fn simulate_dead_column_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let (cube, _) = worked_instance(dir.path());
    let mask = write(
        dir.path(),
        "dead.hsic",
        &CubeFile::new(2, 2, 1, Dtype::F64, vec![0.0, 1.0, 0.0, 1.0]),
    );
    let out = cassi(&[
        "simulate",
        "--cube",
        p(&cube),
        "--mask",
        p(&mask),
        "--shift-step",
        "1",
        "--out",
        p(&dir.path().join("y")),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("degenerate"));
}

#[test]
fn simulate_dimension_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (cube, _) = worked_instance(dir.path());
    let mask = write(
        dir.path(),
        "m3.hsic",
        &CubeFile::new(3, 3, 1, Dtype::F64, vec![1.0; 9]),
    );
    let out = cassi(&[
        "simulate",
        "--cube",
        p(&cube),
        "--mask",
        p(&mask),
        "--shift-step",
        "1",
        "--out",
        p(&dir.path().join("y")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!stderr(&out).is_empty());
}

#[test]
fn simulate_with_noise_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let (cube, mask, _) = suite_instance(dir.path());
    let mut files = Vec::new();
    for (name, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let path = dir.path().join(name);
        let out = cassi(&[
            "simulate",
            "--cube",
            p(&cube),
            "--mask",
            p(&mask),
            "--shift-step",
            "2",
            "--shot-noise-bits",
            "8",
            "--seed",
            seed,
            "--out",
            p(&path),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        files.push(std::fs::read(path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_ne!(files[0], files[2]);
}

#[test]
fn reconstruct_pinv_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mask, meas) = suite_instance(dir.path());
    let (x, rep) = (dir.path().join("x"), dir.path().join("r.txt"));
    let out = cassi(&[
        "reconstruct",
        "--meas",
        p(&meas),
        "--mask",
        p(&mask),
        "--shift-step",
        "2",
        "--method",
        "pinv",
        "--out",
        p(&x),
        "--report",
        p(&rep),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = Report::parse(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(r.get("method"), Some("pinv"));
    assert_eq!(r.get("bands"), Some("4"));
    assert!(r.get("residual_l2").unwrap().parse::<f64>().unwrap() <= 1e-8);
    let cube = CubeFile::read(&x).unwrap();
    assert_eq!((cube.height, cube.width, cube.bands), (16, 16, 4));
}

#[test]
fn reconstruct_rnd_report_has_full_config_and_tiny_residual() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mask, meas) = suite_instance(dir.path());
    for extra in [
        vec![],
        vec!["--no-crop", "--init", "shift"],
        vec!["--init", "repeat", "--tv-weight", "0.5"],
    ] {
        let (x, rep) = (dir.path().join("x"), dir.path().join("r.txt"));
        let mut args = vec![
            "reconstruct",
            "--meas",
            p(&meas),
            "--mask",
            p(&mask),
            "--shift-step",
            "2",
            "--method",
            "rnd-gap-tv",
            "--iters",
            "15",
            "--out",
            p(&x),
            "--report",
            p(&rep),
        ];
        args.extend(extra.iter());
        let out = cassi(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let r = Report::parse(&std::fs::read_to_string(&rep).unwrap()).unwrap();
        for key in [
            "height",
            "width",
            "bands",
            "shift_step",
            "iterations",
            "tv_weight",
            "tv_inner_iterations",
            "init",
            "crop_denoiser_input",
            "convergence_tol",
            "dtype",
            "iterations_run",
            "wall_time_ms",
        ] {
            assert!(r.get(key).is_some(), "missing {key}");
        }
        assert_eq!(r.get("iterations_run"), Some("15"));
        assert!(r.get("residual_rel_inf").unwrap().parse::<f64>().unwrap() <= 1e-8);
        if extra.contains(&"--no-crop") {
            assert_eq!(r.get("crop_denoiser_input"), Some("false"));
            assert_eq!(r.get("init"), Some("shift"));
        }
    }
}

#[test]
fn reconstruct_batch_matches_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (cube, mask, meas) = suite_instance(dir.path());
    let meas2 = dir.path().join("meas_noisy");
    let out = cassi(&[
        "simulate",
        "--cube",
        p(&cube),
        "--mask",
        p(&mask),
        "--shift-step",
        "2",
        "--shot-noise-bits",
        "10",
        "--out",
        p(&meas2),
    ]);
    assert_eq!(code(&out), 0);

    let base = [
        "--mask",
        p(&mask),
        "--shift-step",
        "2",
        "--method",
        "gap-tv",
        "--iters",
        "8",
    ];
    let (b1, b2) = (dir.path().join("b1"), dir.path().join("b2"));
    let mut args = vec![
        "reconstruct",
        "--meas",
        p(&meas),
        "--meas",
        p(&meas2),
        "--out",
        p(&b1),
        "--out",
        p(&b2),
    ];
    args.extend(base);
    assert_eq!(code(&cassi(&args)), 0);

    for (m, batch) in [(&meas, &b1), (&meas2, &b2)] {
        let single = dir.path().join("single");
        let mut args = vec!["reconstruct", "--meas", p(m), "--out", p(&single)];
        args.extend(base);
        assert_eq!(code(&cassi(&args)), 0);
        assert_eq!(
            std::fs::read(&single).unwrap(),
            std::fs::read(batch).unwrap()
        );
    }
}

#[test]
fn reconstruct_config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mask, meas) = suite_instance(dir.path());
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "shift_step = 2\nmethod = \"gap-tv\"\niterations = 4\ntv_weight = 0.25\ndtype = \"f32\"\n",
    )
    .unwrap();
    let (x, rep) = (dir.path().join("x"), dir.path().join("r.txt"));
    let out = cassi(&[
        "reconstruct",
        "--meas",
        p(&meas),
        "--mask",
        p(&mask),
        "--config",
        p(&cfg),
        "--iters",
        "6",
        "--out",
        p(&x),
        "--report",
        p(&rep),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = Report::parse(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(r.get("method"), Some("gap-tv"));
    assert_eq!(r.get("iterations"), Some("6"));
    assert_eq!(r.get("tv_weight"), Some("0.25"));
    assert_eq!(r.get("tv_inner_iterations"), Some("20"));
    assert_eq!(CubeFile::read(&x).unwrap().dtype, Dtype::F32);

    std::fs::write(&cfg, "shift_step = 2\nitreations = 4\n").unwrap();
    let out = cassi(&[
        "reconstruct",
        "--meas",
        p(&meas),
        "--mask",
        p(&mask),
        "--config",
        p(&cfg),
        "--out",
        p(&x),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("itreations"));
}

#[test]
fn reconstruct_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mask, meas) = suite_instance(dir.path());
    let x = dir.path().join("x");
    // Missing shift step.
    assert_eq!(
        code(&cassi(&[
            "reconstruct",
            "--meas",
            p(&meas),
            "--mask",
            p(&mask),
            "--out",
            p(&x)
        ])),
        2
    );
    // Width not compatible with the shift step.
    assert_eq!(
        code(&cassi(&[
            "reconstruct",
            "--meas",
            p(&meas),
            "--mask",
            p(&mask),
            "--shift-step",
            "4",
            "--out",
            p(&x)
        ])),
        2
    );
    // Output count differs from input count.
    assert_eq!(
        code(&cassi(&[
            "reconstruct",
            "--meas",
            p(&meas),
            "--meas",
            p(&meas),
            "--mask",
            p(&mask),
            "--shift-step",
            "2",
            "--out",
            p(&x),
        ])),
        2
    );
    assert_eq!(
        code(&cassi(&[
            "reconstruct",
            "--meas",
            p(&meas),
            "--mask",
            p(&mask),
            "--shift-step",
            "2",
            "--method",
            "magic",
            "--out",
            p(&x)
        ])),
        2
    );
}

#[test]
fn reconstruct_overflowing_input_exits_4() {
    // Sigma = 1e-320 is subnormal, so its reciprocal overflows and the first
    // iterate is not finite.
    let dir = tempfile::tempdir().unwrap();
    let mask = write(
        dir.path(),
        "m.hsic",
        &CubeFile::new(2, 2, 1, Dtype::F64, vec![1e-160; 4]),
    );
    let meas = write(
        dir.path(),
        "y.hsic",
        &CubeFile::new(2, 3, 1, Dtype::F64, vec![1.0; 6]),
    );
    let out = cassi(&[
        "reconstruct",
        "--meas",
        p(&meas),
        "--mask",
        p(&mask),
        "--shift-step",
        "1",
        "--method",
        "gap-tv",
        "--iters",
        "5",
        "--out",
        p(&dir.path().join("x")),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged"));
}

#[test]
fn metrics_examples() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(
        dir.path(),
        "a",
        &CubeFile::new(8, 8, 2, Dtype::F64, vec![0.3; 128]),
    );
    let b = write(
        dir.path(),
        "b",
        &CubeFile::new(8, 8, 2, Dtype::F64, vec![0.4; 128]),
    );

    let out = cassi(&["metrics", "--ref", p(&a), "--test", p(&a)]);
    assert_eq!(code(&out), 0);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["psnr_db"], 100.0);
    assert_eq!(json["ssim"], 1.0);

    let out = cassi(&[
        "metrics",
        "--ref",
        p(&a),
        "--test",
        p(&b),
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scope,psnr_db,ssim,mse");
    assert_eq!(lines.len(), 4);
    let mean: Vec<&str> = lines[3].split(',').collect();
    assert_eq!(mean[0], "mean");
    assert!((mean[1].parse::<f64>().unwrap() - 20.0).abs() < 1e-9);
}

#[test]
fn metrics_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(
        dir.path(),
        "a",
        &CubeFile::new(8, 8, 2, Dtype::F64, vec![0.3; 128]),
    );
    let c = write(
        dir.path(),
        "c",
        &CubeFile::new(8, 8, 3, Dtype::F64, vec![0.3; 192]),
    );
    assert_eq!(
        code(&cassi(&["metrics", "--ref", p(&a), "--test", p(&c)])),
        2
    );

    let bad = dir.path().join("bad");
    let mut bytes = std::fs::read(&a).unwrap();
    bytes.truncate(100);
    std::fs::write(&bad, bytes).unwrap();
    let out = cassi(&["metrics", "--ref", p(&a), "--test", p(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("byte 100"), "{}", stderr(&out));

    let out = cassi(&[
        "metrics",
        "--ref",
        p(&a),
        "--test",
        p(&dir.path().join("missing")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn oracle_check_exit_codes() {
    let out = cassi(&[
        "oracle-check",
        "--height",
        "4",
        "--width",
        "4",
        "--bands",
        "3",
        "--shift-step",
        "1",
        "--seed",
        "7",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("rnd_combine = "));

    let out = cassi(&[
        "oracle-check",
        "--height",
        "256",
        "--width",
        "256",
        "--bands",
        "28",
        "--shift-step",
        "2",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("too large"));

    let out = cassi(&[
        "oracle-check",
        "--height",
        "4",
        "--width",
        "4",
        "--bands",
        "3",
        "--shift-step",
        "1",
        "--seed",
        "7",
        "--corrupt-sigma",
        "2.0",
    ]);
    assert_eq!(code(&out), 5);
    assert!(stderr(&out).contains("pinv_apply"));
}

#[test]
fn bench_single_rep_prints_single_row() {
    let out = cassi(&[
        "bench",
        "--height",
        "16",
        "--width",
        "16",
        "--bands",
        "4",
        "--shift-step",
        "2",
        "--reps",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("op,time_ms\n"));
    assert!(!text.contains("p95"));
    assert_eq!(
        text.lines()
            .filter(|l| l.starts_with("pinv_apply,"))
            .count(),
        1
    );

    let out = cassi(&[
        "bench",
        "--height",
        "16",
        "--width",
        "16",
        "--bands",
        "4",
        "--shift-step",
        "2",
        "--reps",
        "5",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("op,reps,median_ms,p95_ms\n"));
    assert!(stdout(&out).contains("operator_bytes = "));

    assert_eq!(code(&cassi(&["bench", "--reps", "0"])), 2);
}

#[test]
fn mask_commands() {
    let dir = tempfile::tempdir().unwrap();
    let ones = dir.path().join("ones");
    assert_eq!(
        code(&cassi(&[
            "mask",
            "gen",
            "--height",
            "6",
            "--width",
            "5",
            "--density",
            "1.0",
            "--out",
            p(&ones)
        ])),
        0
    );
    let m = CubeFile::read(&ones).unwrap();
    assert_eq!((m.height, m.width, m.bands), (6, 5, 1));
    assert!(m.data.iter().all(|&v| v == 1.0));

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for path in [&a, &b] {
        assert_eq!(
            code(&cassi(&[
                "mask",
                "gen",
                "--height",
                "12",
                "--width",
                "12",
                "--seed",
                "4",
                "--out",
                p(path)
            ])),
            0
        );
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let same = dir.path().join("same");
    assert_eq!(
        code(&cassi(&[
            "mask",
            "crop",
            "--in",
            p(&a),
            "--size",
            "12",
            "--out",
            p(&same)
        ])),
        0
    );
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&same).unwrap());

    let small = dir.path().join("small");
    assert_eq!(
        code(&cassi(&[
            "mask",
            "crop",
            "--in",
            p(&a),
            "--size",
            "5",
            "--seed",
            "1",
            "--out",
            p(&small)
        ])),
        0
    );
    assert_eq!(CubeFile::read(&small).unwrap().width, 5);
    assert_eq!(
        code(&cassi(&[
            "mask",
            "crop",
            "--in",
            p(&a),
            "--size",
            "13",
            "--out",
            p(&small)
        ])),
        2
    );
}

#[test]
fn export_writes_one_pgm_per_band() {
    let dir = tempfile::tempdir().unwrap();
    let cube = write(
        dir.path(),
        "c",
        &CubeFile::new(
            2,
            3,
            2,
            Dtype::F64,
            vec![0.0, 0.5, 1.0, 1.0, 0.5, 0.0, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2],
        ),
    );
    let out_dir = dir.path().join("png");
    assert_eq!(
        code(&cassi(&[
            "export",
            "--in",
            p(&cube),
            "--out-dir",
            p(&out_dir)
        ])),
        0
    );
    let band0 = std::fs::read(out_dir.join("band_00.pgm")).unwrap();
    assert_eq!(band0, b"P5\n3 2\n255\n\x00\x80\xff\xff\x80\x00".to_vec());
    assert!(out_dir.join("band_01.pgm").exists());
    assert!(!out_dir.join("band_02.pgm").exists());
}

#[test]
fn ablate_prints_twelve_rows() {
    let out = cassi(&["ablate", "--scenes", "2", "--iters", "4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], cassi_cli::pipeline::ABLATION_CSV_HEADER);
    assert_eq!(lines.len(), 13);
}

#[test]
fn help_and_usage_codes() {
    assert_eq!(code(&cassi(&["--help"])), 0);
    assert_eq!(code(&cassi(&["frobnicate"])), 2);
    assert_eq!(code(&cassi(&[])), 2);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mask, meas) = suite_instance(dir.path());
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let x = dir.path().join(format!("x{threads}"));
        let out = Command::new(env!("CARGO_BIN_EXE_cassi"))
            .args([
                "reconstruct",
                "--meas",
                p(&meas),
                "--mask",
                p(&mask),
                "--shift-step",
                "2",
                "--iters",
                "10",
                "--out",
                p(&x),
            ])
            .env("CASSI_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        outputs.push(std::fs::read(&x).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);

    let out = Command::new(env!("CARGO_BIN_EXE_cassi"))
        .args([
            "mask",
            "gen",
            "--height",
            "2",
            "--width",
            "2",
            "--out",
            p(&dir.path().join("m")),
        ])
        .env("CASSI_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}
