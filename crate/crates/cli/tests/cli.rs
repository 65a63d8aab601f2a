use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn convtrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convtrace"))
        .args(args)
        .env_remove("CONVTRACE_LOG")
        .output()
        .expect("run convtrace")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_SPEC: &str = r#"
[[dataset]]
seed = 10
width = 32
height = 24
kind = "smoothed_noise"
count = 6

[[dataset]]
seed = 20
width = 32
height = 24
kind = "transpose_conv"
count = 4
"#;

fn synth(dir: &Path, spec: &str) -> PathBuf {
    let spec_path = dir.join("spec.toml");
    fs::write(&spec_path, spec).unwrap();
    let out = dir.join("corpus");
    let o = convtrace(&["synth", "--spec", s(&spec_path), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("manifest.csv")
}

fn extract(manifest: &Path, alpha: &str, out: &Path, jobs: &str) -> Output {
    convtrace(&[
        "extract",
        "--manifest",
        s(manifest),
        "--alpha",
        alpha,
        "--out",
        s(out),
        "--jobs",
        jobs,
    ])
}

fn pngs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    v.sort();
    v
}

#[test]
fn synth_writes_images_and_manifest_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SMALL_SPEC.replace("count = 6", "count = 16");
    let manifest = synth(dir.path(), &spec);
    let corpus = manifest.parent().unwrap();
    let first = pngs(corpus);
    assert_eq!(first.len(), 20);
    assert_eq!(fs::read_to_string(&manifest).unwrap().lines().count(), 21);

    let again = tempfile::tempdir().unwrap();
    let manifest2 = synth(again.path(), &spec);
    assert_eq!(fs::read(&manifest).unwrap(), fs::read(&manifest2).unwrap());
    for (a, b) in first.iter().zip(pngs(manifest2.parent().unwrap())) {
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }
}

#[test]
fn bad_spec_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    fs::write(&spec, "[[dataset]]\nseed = 1\nkind = \"gan\"\n").unwrap();
    let o = convtrace(&[
        "synth",
        "--spec",
        s(&spec),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("error"));
}

#[test]
fn extract_emits_rows_in_manifest_order() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), SMALL_SPEC);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(code(&extract(&manifest, "1", &a, "1")), 0);
    assert_eq!(code(&extract(&manifest, "1", &b, "8")), 0);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());

    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);
    assert_eq!(
        lines[0].split(',').filter(|c| c.starts_with("f_")).count(),
        24
    );
    let man: Vec<String> = fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    let rows: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(rows, man);
}

#[test]
fn extract_larger_alpha_widens_rows() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), SMALL_SPEC);
    let out = dir.path().join("a2.csv");
    assert_eq!(code(&extract(&manifest, "2", &out, "2")), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().all(|l| l.split(',').count() == 5 + 72));
}

#[test]
fn empty_manifest_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.csv");
    fs::write(&manifest, "path,label,source\n").unwrap();
    let out = dir.path().join("f.csv");
    let o = extract(&manifest, "1", &out, "1");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1);
}

#[test]
fn unreadable_image_marks_row_and_exits_partial() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), SMALL_SPEC);
    let corpus = manifest.parent().unwrap();
    let victim = pngs(corpus)[2].clone();
    fs::write(&victim, b"not a png").unwrap();
    let out = dir.path().join("f.csv");
    let o = extract(&manifest, "1", &out, "3");
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("1 of 10 images failed"));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 11);
    let name = victim.file_name().unwrap().to_str().unwrap();
    let row = text.lines().find(|l| l.starts_with(name)).unwrap();
    assert!(row.contains(",failed,NaN"));
}

#[test]
fn missing_manifest_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = extract(
        &dir.path().join("nope.csv"),
        "1",
        &dir.path().join("f.csv"),
        "1",
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn invalid_alpha_and_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), SMALL_SPEC);
    assert_eq!(
        code(&extract(&manifest, "4", &dir.path().join("f.csv"), "1")),
        1
    );
    assert_eq!(code(&convtrace(&["extract", "--bogus"])), 1);
    assert_eq!(code(&convtrace(&[])), 1);
    assert_eq!(code(&convtrace(&["--help"])), 0);
}

#[test]
fn rotate90_attack_transposes_every_image() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), SMALL_SPEC);
    let out = dir.path().join("rot");
    let o = convtrace(&[
        "attack",
        "--manifest",
        s(&manifest),
        "--attack",
        "rotate:90",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert!(text.starts_with("path,label,source,attack\n"));
    assert_eq!(text.lines().count(), 11);
    for p in pngs(&out) {
        // image headers carry the dimensions at bytes 16..24
        let bytes = fs::read(&p).unwrap();
        let w = u32::from_be_bytes(bytes[16..20].try_into().unwrap());
        let h = u32::from_be_bytes(bytes[20..24].try_into().unwrap());
        assert_eq!((w, h), (24, 32));
    }
}

#[test]
fn attack_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), SMALL_SPEC);
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let o = convtrace(&[
            "attack",
            "--manifest",
            s(&manifest),
            "--attack",
            "random-square",
            "--seed",
            "5",
            "--out",
            s(&out),
            "--jobs",
            jobs,
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        pngs(&out)
            .into_iter()
            .map(|p| fs::read(p).unwrap())
            .collect::<Vec<_>>()
    };
    let a = run("a", "1");
    assert_eq!(a.len(), 10);
    assert_eq!(a, run("b", "4"));
}

#[test]
fn negative_scale_token_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), SMALL_SPEC);
    let out = dir.path().join("small");
    let o = convtrace(&[
        "attack",
        "--manifest",
        s(&manifest),
        "--attack",
        "scale:-50",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn invalid_attack_token_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), SMALL_SPEC);
    for token in ["blur:5", "rotate:30", "sharpen", "jpeg:75"] {
        let o = convtrace(&[
            "attack",
            "--manifest",
            s(&manifest),
            "--attack",
            token,
            "--out",
            s(&dir.path().join("x")),
        ]);
        assert_eq!(code(&o), 1, "{token}");
    }
}

const EVAL_SPEC: &str = r#"
[[dataset]]
seed = 100
width = 48
height = 48
kind = "smoothed_noise"
count = 30

[[dataset]]
seed = 200
width = 48
height = 48
kind = "transpose_conv"
count = 10
source = "gan-a"

[[dataset]]
seed = 300
width = 48
height = 48
kind = "transpose_conv"
kernel = [0.1, 0.3, 0.3, 0.1, 0.3, 0.9, 0.9, 0.3, 0.3, 0.9, 0.9, 0.3, 0.1, 0.3, 0.3, 0.1]
count = 10
source = "gan-b"

[[dataset]]
seed = 400
width = 48
height = 48
kind = "linear_upsample"
count = 10
"#;

fn eval_corpus(dir: &Path) -> (PathBuf, PathBuf) {
    let manifest = synth(dir, EVAL_SPEC);
    let a1 = dir.join("a1.csv");
    let a2 = dir.join("a2.csv");
    assert_eq!(code(&extract(&manifest, "1", &a1, "0")), 0);
    assert_eq!(code(&extract(&manifest, "2", &a2, "0")), 0);
    (a1, a2)
}

#[test]
fn eval_pooled_and_pairwise_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (a1, a2) = eval_corpus(dir.path());

    let pooled = dir.path().join("pooled");
    let o = convtrace(&[
        "eval",
        "--features",
        s(&a1),
        "--features",
        s(&a2),
        "--classifiers",
        "rf,lda",
        "--mode",
        "cv5",
        "--seed",
        "3",
        "--out",
        s(&pooled),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(pooled.join("pooled.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    let rf1 = rows.iter().find(|r| r.contains(",rf,1,3x3,")).unwrap();
    let cells: Vec<&str> = rf1.split(',').collect();
    assert_eq!(cells[8].split(';').count(), 5);
    let acc: f64 = cells[6].parse().unwrap();
    assert!(acc >= 0.95, "{rf1}");
    let text = fs::read_to_string(pooled.join("pooled.txt")).unwrap();
    assert!(text.contains("Random Forest") && text.contains("5x5"));

    let pair = dir.path().join("pair");
    let o = convtrace(&[
        "eval",
        "--features",
        s(&a1),
        "--classifiers",
        "knn:3",
        "--mode",
        "split70",
        "--grouping",
        "pairwise",
        "--out",
        s(&pair),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut reports: Vec<String> = fs::read_dir(&pair)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    reports.sort();
    assert_eq!(
        reports,
        [
            "real_vs_gan-a.csv",
            "real_vs_gan-b.csv",
            "real_vs_linear_upsample.csv"
        ]
    );
}

#[test]
fn eval_is_reproducible_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let (a1, _) = eval_corpus(dir.path());
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let o = convtrace(&[
            "eval",
            "--features",
            s(&a1),
            "--classifiers",
            "all",
            "--seed",
            "9",
            "--out",
            s(&out),
            "--jobs",
            jobs,
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(out.join("pooled.csv")).unwrap()
    };
    assert_eq!(run("x", "1"), run("y", "4"));
}

#[test]
fn eval_rejects_mixed_dimensions_in_one_column() {
    let dir = tempfile::tempdir().unwrap();
    let (a1, a2) = eval_corpus(dir.path());
    let both = format!("{},{}", s(&a1), s(&a2));
    let o = convtrace(&[
        "eval",
        "--features",
        &both,
        "--out",
        s(&dir.path().join("r")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("dimension mismatch"));
}

#[test]
fn train_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (a1, _) = eval_corpus(dir.path());
    let model = dir.path().join("models/rf.json");
    let o = convtrace(&[
        "train",
        "--features",
        s(&a1),
        "--classifier",
        "rf",
        "--seed",
        "1",
        "--out",
        s(&model),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json: String = fs::read_to_string(&model)
        .unwrap()
        .split_whitespace()
        .collect();
    assert!(json.contains(r#""format":"convtrace-model""#));
    assert!(json.contains(r#""train_seed":1,"#));

    let preds = dir.path().join("preds.csv");
    let o = convtrace(&[
        "report",
        "--model",
        s(&model),
        "--features",
        s(&a1),
        "--out",
        s(&preds),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("accuracy"), "{stdout}");
    let text = fs::read_to_string(&preds).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert!(text.starts_with("path,label,predicted\n"));
}

#[test]
fn report_rejects_wrong_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let (a1, a2) = eval_corpus(dir.path());
    let model = dir.path().join("lda.json");
    assert_eq!(
        code(&convtrace(&[
            "train",
            "--features",
            s(&a1),
            "--classifier",
            "lda",
            "--out",
            s(&model)
        ])),
        0
    );
    let o = convtrace(&[
        "report",
        "--model",
        s(&model),
        "--features",
        s(&a2),
        "--out",
        s(&dir.path().join("p.csv")),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn log_level_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), SMALL_SPEC);
    let o = Command::new(env!("CARGO_BIN_EXE_convtrace"))
        .args([
            "extract",
            "--manifest",
            s(&manifest),
            "--out",
            s(&dir.path().join("f.csv")),
        ])
        .env("CONVTRACE_LOG", "info")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("extracted"));
    assert!(
        !stderr(&extract(&manifest, "1", &dir.path().join("g.csv"), "1")).contains("extracted")
    );
}
