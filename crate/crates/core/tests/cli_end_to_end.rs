use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn omm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn eval_mean(v: &Path, dir: &Path) -> f64 {
    let out = omm(&[
        "eval",
        "--v",
        s(v),
        "--reference",
        s(&dir.join("reference.csv")),
        "--operator",
        s(&dir.join("operator.mtx")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    report["mean_cosine"].as_f64().unwrap()
}

fn write_diag(path: &Path, values: &[f64]) {
    let mut text = format!(
        "%%MatrixMarket matrix coordinate real symmetric\n{0} {0} {0}\n",
        values.len()
    );
    for (i, v) in values.iter().enumerate() {
        text += &format!("{} {} {v}\n", i + 1, i + 1);
    }
    fs::write(path, text).unwrap();
}

#[test]
fn fit_eval_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("psd");
    let out = omm(&[
        "gen",
        "random-psd",
        "--spectrum",
        "3,2,1",
        "--seed",
        "4",
        "--out",
        s(&gen),
    ]);
    assert_eq!(code(&out), 0);
    for f in ["operator.mtx", "reference.csv", "meta.json"] {
        assert!(gen.join(f).exists(), "{f}");
    }

    let run = tmp.path().join("run");
    let op = gen.join("operator.mtx");
    let args = [
        "fit",
        "--operator",
        s(&op),
        "--k",
        "2",
        "--method",
        "omm-seq",
        "--lr",
        "0.05",
        "--max-steps",
        "5000",
        "--seed",
        "9",
    ];
    let out = omm(&[&args[..], &["--out", s(&run)]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json_file(&run.join("manifest.json"));
    let value = manifest["final_objective"].as_f64().unwrap();
    assert!((value + 5.0).abs() < 1e-6, "{value}");
    assert!((eval_mean(&run.join("V.mtx"), &gen) - 1.0).abs() < 1e-6);

    // same config twice, and once replayed from the manifest: identical bytes
    let again = tmp.path().join("again");
    assert_eq!(code(&omm(&[&args[..], &["--out", s(&again)]].concat())), 0);
    let replay = tmp.path().join("replay");
    let out = omm(&[
        "fit",
        "--config",
        s(&run.join("manifest.json")),
        "--out",
        s(&replay),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for dir in [&again, &replay] {
        for f in ["V.mtx", "trace.csv"] {
            assert_eq!(
                fs::read(run.join(f)).unwrap(),
                fs::read(dir.join(f)).unwrap(),
                "{f}"
            );
        }
    }

    // an input edited after the run invalidates the manifest
    fs::write(&op, fs::read_to_string(&op).unwrap() + "\n").unwrap();
    let out = omm(&[
        "fit",
        "--config",
        s(&run.join("manifest.json")),
        "--out",
        s(&replay),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn checkpoint_scores_below_converged_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("psd");
    assert_eq!(
        code(&omm(&[
            "gen",
            "random-psd",
            "--d",
            "12",
            "--seed",
            "2",
            "--out",
            s(&gen)
        ])),
        0
    );
    let op = gen.join("operator.mtx");
    let mut means = Vec::new();
    for steps in ["3", "20000"] {
        let run = tmp.path().join(format!("run{steps}"));
        let out = omm(&[
            "fit",
            "--operator",
            s(&op),
            "--k",
            "3",
            "--method",
            "omm-seq",
            "--lr",
            "0.02",
            "--max-steps",
            steps,
            "--out",
            s(&run),
        ]);
        assert_eq!(code(&out), 0);
        means.push(eval_mean(&run.join("V.mtx"), &gen));
    }
    assert!(means[0] < means[1], "{means:?}");
    assert!(means[1] > 0.999, "{means:?}");
}

#[test]
fn eval_is_sign_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_diag(&dir.join("operator.mtx"), &[3.0, 2.0, 1.0]);
    fs::write(
        dir.join("reference.csv"),
        "index,eigenvalue\n0,3\n1,2\n2,1\n",
    )
    .unwrap();
    let v = dir.join("V.mtx");
    fs::write(
        &v,
        "%%MatrixMarket matrix array real general\n3 2\n-1\n0\n0\n0\n1\n0\n",
    )
    .unwrap();
    assert_eq!(eval_mean(&v, dir), 1.0);

    // a reference file that disagrees with the operator is rejected
    fs::write(
        dir.join("reference.csv"),
        "index,eigenvalue\n0,3\n1,2\n2,0.5\n",
    )
    .unwrap();
    let out = omm(&[
        "eval",
        "--v",
        s(&v),
        "--reference",
        s(&dir.join("reference.csv")),
        "--operator",
        s(&dir.join("operator.mtx")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn non_psd_run_exits_diverged() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_diag(&dir.join("a.mtx"), &[1.0, -1.0]);
    fs::write(
        dir.join("init.mtx"),
        "%%MatrixMarket matrix array real general\n2 1\n0.1\n1.2\n",
    )
    .unwrap();
    let (a, init_path) = (dir.join("a.mtx"), dir.join("init.mtx"));
    let base = [
        "fit",
        "--operator",
        s(&a),
        "--k",
        "1",
        "--lr",
        "0.1",
        "--max-steps",
        "500",
    ];
    let init = ["--init", s(&init_path)];
    let out = omm(&[&base[..], &init[..], &["--out", s(&dir.join("bad"))]].concat());
    assert_eq!(code(&out), 2);
    assert_eq!(
        json_file(&dir.join("bad/manifest.json"))["status"],
        "diverged"
    );

    let out = omm(&[
        &base[..],
        &init[..],
        &["--kappa", "1", "--out", s(&dir.join("good"))],
    ]
    .concat());
    assert_eq!(code(&out), 0);
    assert_eq!(
        json_file(&dir.join("good/manifest.json"))["status"],
        "converged"
    );
}

#[test]
fn streaming_sanger_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("cov");
    assert_eq!(
        code(&omm(&[
            "gen",
            "random-psd",
            "--spectrum",
            "4,3,2,1,0.5",
            "--out",
            s(&gen)
        ])),
        0
    );
    let run = tmp.path().join("run");
    let out = omm(&[
        "fit",
        "--stream-covariance",
        s(&gen.join("operator.mtx")),
        "--method",
        "sanger",
        "--k",
        "2",
        "--rule",
        "adam",
        "--lr",
        "0.003",
        "--schedule",
        "cosine",
        "--max-steps",
        "4000",
        "--batch",
        "32",
        "--out",
        s(&run),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(eval_mean(&run.join("V.mtx"), &gen) > 0.95);

    // streams take no spectrum shift
    let out = omm(&[
        "fit",
        "--stream-covariance",
        s(&gen.join("operator.mtx")),
        "--method",
        "sanger",
        "--k",
        "2",
        "--kappa",
        "1",
        "--out",
        s(&run),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn generators_write_expected_operators() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = tmp.path().join("grid");
    assert_eq!(
        code(&omm(&[
            "gen",
            "gridworld",
            "--map-inline",
            "..",
            "--out",
            s(&grid)
        ])),
        0
    );
    let lap = omm::io::read_operator(&grid.join("laplacian.mtx"))
        .unwrap()
        .to_dense();
    assert_eq!(lap.as_slice(), &[0.25, -0.25, -0.25, 0.25]);
    let op = omm::io::read_operator(&grid.join("operator.mtx"))
        .unwrap()
        .to_dense();
    assert_eq!(op.as_slice(), &[1.75, 0.25, 0.25, 1.75]);

    let well = tmp.path().join("well");
    let out = omm(&[
        "gen",
        "schrodinger",
        "--potential",
        "well",
        "--n",
        "40",
        "--out",
        s(&well),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        omm::io::read_operator(&well.join("operator.mtx"))
            .unwrap()
            .dim(),
        1600
    );
    let meta = json_file(&well.join("meta.json"));
    assert_eq!(meta["target"], "bottom");
    assert_eq!(meta["suggested_method"], "omm-inverse");

    let out = omm(&[
        "gen",
        "schrodinger",
        "--potential",
        "hydrogen",
        "--n",
        "15",
        "--out",
        s(&well),
    ]);
    assert_eq!(
        code(&out),
        1,
        "odd hydrogen grids put a node on the nucleus"
    );
}

#[test]
fn check_exit_codes() {
    assert_eq!(code(&omm(&["check", "--suite", "grad"])), 0);
    let out = omm(&["check", "--suite", "grad", "--inject-wrong-sign"]);
    assert_eq!(code(&out), 3);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.starts_with("FAIL grad/omm-p1")));
    assert_eq!(code(&omm(&["check", "--suite", "identities"])), 0);
    assert_eq!(code(&omm(&["fit", "--k", "2"])), 1);
    assert_eq!(code(&omm(&["frobnicate"])), 1);
}
