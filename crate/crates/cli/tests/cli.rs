use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use pdna_core::raster;
use pdna_core::synthetic::scene;

fn pdna(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_pdna"))
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut input = child.stdin.take().unwrap();
    if let Some(text) = stdin {
        input.write_all(text.as_bytes()).unwrap();
    }
    drop(input);
    child.wait_with_output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pdna(args, None);
    assert!(
        out.status.success(),
        "pdna {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

/// A 64x48 image encoded in three layers and stored in a pool.
struct Store {
    dir: tempfile::TempDir,
}

impl Store {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let png = dir.path().join("dune.png");
        raster::save_png(&scene(64, 48, 4), &png).unwrap();
        let layers = dir.path().join("layers");
        let out = ok(&["encode", s(&png), "--levels", "3", "--out", s(&layers)]);
        assert_eq!(out.lines().filter(|l| l.starts_with("dune L")).count(), 3);
        let hpx = layers.join("dune.hpx");
        let (dict, pool, inputs) = (
            dir.path().join("dict.json"),
            dir.path().join("pool.bin"),
            dir.path().join("inputs.json"),
        );
        let out = ok(&[
            "build-pool",
            s(&hpx),
            "--dict",
            s(&dict),
            "--pool",
            s(&pool),
            "--inputs",
            s(&inputs),
        ]);
        assert!(out.contains("dune L0:"));
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn retrieve(&self, extra: &[&str], stdin: Option<&str>) -> Output {
        let (pool, dict) = (self.path("pool.bin"), self.path("dict.json"));
        let mut args = vec![
            "retrieve",
            "--pool",
            s(&pool),
            "--dict",
            s(&dict),
            "--image-id",
            "dune",
        ];
        args.extend_from_slice(extra);
        pdna(&args, stdin)
    }
}

#[test]
fn encode_writes_one_record_per_layer() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("k.png");
    ok(&["synth", "--seed", "5", "--out", s(&png)]);
    let out = ok(&["encode", s(&png), "--out", s(dir.path()), "--id", "kodak05"]);
    let dims: Vec<&str> = out
        .lines()
        .filter(|l| l.starts_with("kodak05 L"))
        .map(|l| l.split_whitespace().nth(2).unwrap())
        .collect();
    assert_eq!(dims, ["96x64", "192x128", "384x256", "768x512"]);
    assert!(dir.path().join("kodak05.hpx").exists());
}

#[test]
fn stop_after_first_layer_reports_its_gain() {
    let store = Store::new();
    let tsv = store.path("l0.tsv");
    let previews = store.path("previews");
    let out = store.retrieve(
        &[
            "--max-layer",
            "0",
            "--telemetry",
            s(&tsv),
            "--previews",
            s(&previews),
        ],
        None,
    );
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("L0  16x12  cost "), "{stdout}");
    assert!(stdout.contains("stopped after L0: G_pd(0) = "), "{stdout}");
    assert!(!stdout.contains("L1 "));
    assert_eq!(
        raster::load(&previews.join("dune_L0.png")).unwrap().width(),
        16
    );

    // a stopped session has no full-retrieval cost to compare against
    let inputs = store.path("inputs.json");
    let out = pdna(
        &["analyze", "--inputs", s(&inputs), "--telemetry", s(&tsv)],
        None,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("retrieved up to L0 only"));
}

#[test]
fn declining_the_prompt_stops() {
    let store = Store::new();
    let out = store.retrieve(&[], Some("n\n"));
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("retrieve layer 1? [y/N]"));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("stopped after L0"), "{stdout}");

    let out = store.retrieve(&[], Some("y\ny\n"));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("complete after L2: G_pd(2) = 1.00"),
        "{stdout}"
    );
}

#[test]
fn full_retrieval_is_lossless_and_analyzable() {
    let store = Store::new();
    let tsv = store.path("all.tsv");
    let png = store.path("dune.png");
    let previews = store.path("previews");
    let out = store.retrieve(
        &[
            "--auto",
            "--telemetry",
            s(&tsv),
            "--original",
            s(&png),
            "--previews",
            s(&previews),
        ],
        None,
    );
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("L2  64x48  cost "), "{stdout}");
    assert!(stdout.contains("psnr lossless"), "{stdout}");
    assert_eq!(
        raster::load(&previews.join("dune_L2.png")).unwrap(),
        raster::load(&png).unwrap()
    );

    let inputs = store.path("inputs.json");
    let report = ok(&["analyze", "--inputs", s(&inputs), "--telemetry", s(&tsv)]);
    assert!(report.contains("read cost (theoretical)"));
    assert!(report.contains("read cost (simulated)"));
    let csv = ok(&[
        "analyze",
        "--inputs",
        s(&inputs),
        "--telemetry",
        s(&tsv),
        "--csv",
    ]);
    let simulated: Vec<&str> = csv.lines().filter(|l| l.starts_with("L2,")).collect();
    assert_eq!(simulated.len(), 2);
    assert!(simulated.iter().all(|l| l.ends_with(",1.000000")));
}

#[test]
fn analyze_reproduces_the_reference_table() {
    let table1 = fixture("table1.json");
    let csv = ok(&["analyze", "--inputs", s(&table1), "--csv"]);
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    let oligos: Vec<&str> = rows.iter().map(|r| r[2]).collect();
    assert_eq!(oligos, ["802", "2229", "6208"]);
    assert_eq!(rows[0][3], "975232");
    let text = ok(&["analyze", "--inputs", s(&table1)]);
    assert!(text.contains("read cost (theoretical)"));
}

#[test]
fn bad_input_fails_loudly() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.png");
    let out = pdna(&["encode", s(&missing), "--out", s(dir.path())], None);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.png"));

    let store = Store::new();
    let out = pdna(
        &[
            "retrieve",
            "--pool",
            s(&store.path("pool.bin")),
            "--dict",
            s(&store.path("dict.json")),
            "--image-id",
            "nope",
            "--auto",
        ],
        None,
    );
    assert!(!out.status.success());
}
