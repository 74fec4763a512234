use std::fs;
use std::path::Path;

use annealed_green::cli::RunConfig;
use annealed_green::cli::{main_with_args, Manifest, EXIT_CONFIG, EXIT_OK, EXIT_VERIFY};
use annealed_green::quadrature::free_green;
use annealed_green::{KernelMeta, LatticePoint, MatrixKernel};

fn run(dir: &Path, config: &str, args: &[&str]) -> i32 {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    let out = dir.join("out");
    let mut argv = vec!["annealed-green".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend(["--config".into(), path.display().to_string(), "--out".into(), out.display().to_string()]);
    main_with_args(argv)
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn resolved_config_survives_a_toml_round_trip() {
    let mut cfg = RunConfig::new(4);
    cfg.delta = 0.05;
    cfg.law = "two-point".into();
    cfg.out = Some("elsewhere".into());
    let cfg = cfg.resolved();
    let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn missing_dimension_is_a_config_error() {
    let err = RunConfig::from_toml("delta = 0.1\n").unwrap_err().to_string();
    assert!(err.contains("`d`"), "{err}");
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), "delta = 0.1\n", &["kernel"]), EXIT_CONFIG);
}

#[test]
fn bad_inputs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), "d = 3\ncolour = 1\n", &["kernel"]), EXIT_CONFIG);
    assert_eq!(run(dir.path(), "d = 2\n", &["kernel"]), EXIT_CONFIG);
    assert_eq!(run(dir.path(), "d = 3\nlaw = \"cauchy\"\n", &["kernel"]), EXIT_CONFIG);
    assert_eq!(run(dir.path(), "d = 3\npoints = [[1, 2]]\n", &["green"]), EXIT_CONFIG);
    assert_eq!(main_with_args(["annealed-green", "kernel"]), EXIT_CONFIG);
    assert_eq!(main_with_args(["annealed-green", "frobnicate"]), EXIT_CONFIG);
}

#[test]
fn zero_contrast_kernel_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), "d = 3\ndelta = 0.0\n", &["kernel"]), EXIT_OK);
    let meta: KernelMeta = serde_json::from_str(&read(dir.path(), "kernel.json")).unwrap();
    let k = MatrixKernel::read_csv(read(dir.path(), "kernel.csv").as_bytes(), &meta).unwrap();
    assert!(k.max_entry() == 0.0);
    let m = Manifest::load(&dir.path().join("out/manifest.json")).unwrap();
    assert_eq!(m.command, "kernel");
    assert_eq!(m.config, RunConfig::from_toml("d = 3\ndelta = 0.0\n").unwrap().resolved());
}

#[test]
fn kernel_and_green_outputs_are_reproducible() {
    let cfg = "d = 3\ndelta = 0.1\npoints = [[0, 0, 0], [2, 1, 0]]\n";
    let mut seen = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run(dir.path(), cfg, &["kernel"]), EXIT_OK);
        assert_eq!(run(dir.path(), cfg, &["green"]), EXIT_OK);
        seen.push((read(dir.path(), "kernel.csv"), read(dir.path(), "green.csv")));
    }
    assert_eq!(seen[0], seen[1]);
}

#[test]
fn zero_contrast_green_is_the_free_value() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), "d = 3\ndelta = 0.0\npoints = [[0, 0, 0]]\n", &["green"]), EXIT_OK);
    let v: f64 = rows(&read(dir.path(), "green.csv"))[0][3].parse().unwrap();
    let free = free_green(&LatticePoint::origin(3)).unwrap();
    assert!((v - free).abs() < 1e-9, "{v} {free}");
}

#[test]
fn tscan_reports_a_zero_minimum_without_contrast() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), "d = 3\nsweep = [0.0, 0.1]\nscan_radius = 3\n", &["tscan"]), EXIT_OK);
    let r = rows(&read(dir.path(), "tscan.csv"));
    assert_eq!(r.len(), 2);
    assert_eq!(r[0][1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(r[0][5], "zero");
}

#[test]
fn asymptotics_writes_one_row_per_ray() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "d = 3\ndelta = 0.1\nrays = [[1, 0, 0], [1, 1, 0]]\nradii = [6.0, 9.0, 12.0, 18.0, 24.0]\n";
    assert_eq!(run(dir.path(), cfg, &["asymptotics"]), EXIT_OK);
    let r = rows(&read(dir.path(), "asymptotics.csv"));
    assert_eq!(r.len(), 2);
    assert!(r.iter().all(|row| row.last().unwrap() == "ok" || row.last().unwrap() == "noise-floor"));
}

#[test]
fn mc_writes_corrected_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "d = 3\npoints = [[0, 0, 0], [1, 0, 0]]\n[box]\nextent = 9\nsamples = 8\n";
    assert_eq!(run(dir.path(), cfg, &["mc", "--workers", "2", "--seed", "5"]), EXIT_OK);
    let r = rows(&read(dir.path(), "mc_green.csv"));
    assert_eq!(r.len(), 2);
    let (mean, bias, corrected): (f64, f64, f64) = (r[0][3].parse().unwrap(), r[0][7].parse().unwrap(), r[0][8].parse().unwrap());
    assert_eq!(corrected, mean - bias);
    let m = Manifest::load(&dir.path().join("out/manifest.json")).unwrap();
    assert_eq!(m.config.seed, 5);

    let periodic = "d = 3\nfrequencies = [[1, 0, 0]]\n[box]\nextent = 9\nsamples = 8\nboundary = \"periodic\"\n";
    assert_eq!(run(dir.path(), periodic, &["mc"]), EXIT_OK);
    assert_eq!(rows(&read(dir.path(), "mc_form.csv")).len(), 1);
}

#[test]
fn structural_suite_passes_without_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let code = main_with_args(["annealed-green", "verify", "--suite", "structural", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(run(dir.path(), "d = 3\ndelta = 0.0\n", &["verify", "--suite", "structural"]), EXIT_OK);
    assert!(out.join("verify.json").exists());
}

#[test]
fn oracle_suite_refuses_too_few_samples() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(dir.path(), "d = 3\n[box]\nsamples = 10\n", &["verify", "--suite", "oracle"]);
    assert_eq!(code, EXIT_VERIFY);
    assert!(read(dir.path(), "verify.json").contains("insufficient-samples"));
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 5);
}
