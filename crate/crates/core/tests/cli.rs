use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use voxflow::io as vio;
use voxflow::io::RawVolume;
use voxflow::metrics::{PredictionSet, Record};
use voxflow::reliability::ProbMatrix;
use voxflow::{Shape, Tensor, TensorMap, Volume, VolumeData};

fn voxflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxflow"))
        .args(args)
        .env_remove("VOXFLOW_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn volume(&self, name: &str, shape: Shape, seed: u64) -> PathBuf {
        let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let data = (0..shape.len())
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                x as u8
            })
            .collect();
        let path = self.path(name);
        vio::write_vox1(&path, &Volume::from_u8(shape, data).unwrap()).unwrap();
        path
    }

    fn predictions(&self, name: &str, scores: &[f64], labels: &[u8], folds: Option<&[u32]>) -> PathBuf {
        let records = scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&s, &l))| Record::new(format!("v{i}"), s, l, folds.map(|f| f[i])))
            .collect();
        let path = self.path(name);
        let mut file = fs::File::create(&path).unwrap();
        vio::write_predictions(&mut file, &PredictionSet::new(records).unwrap()).unwrap();
        path
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path
    }
}

#[test]
fn help_and_usage_codes() {
    let o = voxflow(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("Exit codes:") && text.contains("5  infeasible"));
    assert_eq!(code(&voxflow(&["augment", "--bogus"])), 1);
    assert_eq!(code(&voxflow(&["eval"])), 1);
    assert_eq!(code(&voxflow(&["augment", "--preset", "heavy", "--pipeline", "x.json", "--in", "a", "--out", "b"])), 1);
}

#[test]
fn augment_preset_is_deterministic() {
    let fx = Fixture::new();
    let input = fx.volume("in.vox1", Shape::new(6, 10, 12, 3), 1);
    let run = |out: &str, seed: &str| {
        let o = voxflow(&[
            "--quiet", "--seed", seed, "augment", "--preset", "heavy", "--target", "5,8,9",
            "--in", p(&input), "--out", p(&fx.path(out)), "--index", "3",
        ]);
        assert!(o.stderr.is_empty());
        (json(&o), fs::read(fx.path(out)).unwrap())
    };
    let (a, bytes_a) = run("a.vox1", "11");
    let (b, bytes_b) = run("b.vox1", "11");
    assert_eq!(a, b);
    assert_eq!(bytes_a, bytes_b);
    assert_eq!(a["shape"], serde_json::json!([5, 8, 9]));
    assert_eq!(a["index"], 3);
    let fired = a["fired"].as_array().unwrap();
    assert!(fired.iter().any(|f| f["op"] == "resize"));
    assert_eq!(vio::read_vox1(&fx.path("a.vox1")).unwrap().shape(), Shape::new(5, 8, 9, 3));
}

#[test]
fn augment_batch_ignores_thread_count() {
    let fx = Fixture::new();
    let src = fx.path("src");
    fs::create_dir(&src).unwrap();
    for i in 0..4 {
        let v = fx.volume(&format!("v{i}.vox1"), Shape::new(4, 6, 6, 1), i);
        fs::rename(v, src.join(format!("v{i}.vox1"))).unwrap();
    }
    let run = |threads: &str, out: &str| {
        let o = voxflow(&[
            "--threads", threads, "--seed", "5", "augment", "--preset", "mirror3", "--target", "4,6,6",
            "--in", p(&src), "--out", p(&fx.path(out)),
        ]);
        let report = json(&o);
        let files: Vec<Vec<u8>> = (0..4).map(|i| fs::read(fx.path(out).join(format!("v{i}.vox1"))).unwrap()).collect();
        (report, files)
    };
    let one = run("1", "one");
    let two = run("2", "two");
    assert_eq!(one, two);
    assert_eq!(one.0.as_array().unwrap().len(), 4);
    assert_eq!(one.0[2]["index"], 2);
}

#[test]
fn augment_errors() {
    let fx = Fixture::new();
    let out = fx.path("out.vox1");
    let o = voxflow(&["augment", "--preset", "heavy", "--in", p(&fx.path("missing.vox1")), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(o.stdout.is_empty());
    let input = fx.volume("in.vox1", Shape::new(3, 4, 4, 1), 2);
    let bad = fx.write("bad.json", r#"{"seed": 0, "steps": [{"op": "flip", "p": 1.5, "params": {}}]}"#);
    assert_eq!(code(&voxflow(&["augment", "--pipeline", p(&bad), "--in", p(&input), "--out", p(&out)])), 3);
    let unknown = fx.write("unknown.json", r#"{"seed": 0, "steps": [{"op": "twist", "p": 1.0, "params": {}}]}"#);
    assert_eq!(code(&voxflow(&["augment", "--pipeline", p(&unknown), "--in", p(&input), "--out", p(&out)])), 3);
    fs::write(fx.path("junk.vox1"), b"NOPE").unwrap();
    assert_eq!(code(&voxflow(&["augment", "--preset", "heavy", "--in", p(&fx.path("junk.vox1")), "--out", p(&out)])), 2);
    assert!(!out.exists());
}

#[test]
fn augment_png_stack() {
    let fx = Fixture::new();
    let frames = fx.path("frames");
    let v = vio::read_vox1(&fx.volume("v.vox1", Shape::new(3, 5, 6, 3), 3)).unwrap();
    vio::write_png_stack(&frames, &v).unwrap();
    let out = fx.path("out.vox1");
    let pipeline = fx.write("p.json", r#"{"seed": 1, "steps": [{"op": "flip", "p": 1.0, "params": {"p_axis": 0.0}}]}"#);
    let r = json(&voxflow(&["augment", "--pipeline", p(&pipeline), "--in", p(&frames), "--out", p(&out)]));
    assert_eq!(r["fired"][0]["op"], "flip");
    assert_eq!(vio::read_vox1(&out).unwrap(), v);
}

fn kernel_map() -> TensorMap {
    let mut m = TensorMap::new();
    m.insert("conv1.weight", Tensor::from_f32(vec![3, 3, 1, 1], &[2.0, 3.0, 4.0, -3.0, 0.0, 1.0, 2.0, 3.0, 6.0]).unwrap());
    m.insert("conv1.bias", Tensor::from_f32(vec![1], &[0.5]).unwrap());
    m.insert("fc.weight", Tensor::from_f32(vec![2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
    m
}

#[test]
fn inflate_rules_and_summary() {
    let fx = Fixture::new();
    let input = fx.path("k.tmap");
    vio::write_tmap(&input, &kernel_map()).unwrap();
    let out = fx.path("out.tmap");
    let rules = fx.write("rules.json", r#"[{"pattern": "conv\\d+\\.weight", "depth": 5, "mode": "average"}]"#);
    let o = voxflow(&["inflate", "--in", p(&input), "--out", p(&out), "--rules", p(&rules)]);
    assert_eq!(code(&o), 0);
    let table = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "tensor\told_shape\tnew_shape");
    assert_eq!(lines[1], "conv1.weight\t[3, 3, 1, 1]\t[5, 3, 3, 1, 1]");
    assert_eq!(lines[3], "fc.weight\t[2, 2]\t[2, 2]");
    let m = vio::read_tmap(&out).unwrap();
    let w = m.get("conv1.weight").unwrap().to_f32().unwrap();
    assert!((w.iter().sum::<f32>() - 18.0).abs() < 1e-5);
    assert_eq!(m.get("fc.weight"), kernel_map().get("fc.weight"));
}

#[test]
fn inflate_without_matches_copies_bytes() {
    let fx = Fixture::new();
    let input = fx.path("k.tmap");
    vio::write_tmap(&input, &kernel_map()).unwrap();
    let out = fx.path("out.tmap");
    assert_eq!(code(&voxflow(&["inflate", "--in", p(&input), "--out", p(&out)])), 0);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&input).unwrap());
}

#[test]
fn inflate_errors() {
    let fx = Fixture::new();
    let input = fx.path("k.tmap");
    vio::write_tmap(&input, &kernel_map()).unwrap();
    let out = fx.path("out.tmap");
    let o = voxflow(&["inflate", "--in", p(&input), "--out", p(&out), "--pattern", "conv1.weight", "--depth", "4"]);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());
    let o = voxflow(&["inflate", "--in", p(&input), "--out", p(&out), "--pattern", "fc.*"]);
    assert_eq!(code(&o), 4);
    let o = voxflow(&["inflate", "--in", p(&input), "--out", p(&out), "--pattern", "("]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&voxflow(&["inflate", "--in", p(&fx.path("none.tmap")), "--out", p(&out)])), 2);
}

#[test]
fn eval_reports_metrics() {
    let fx = Fixture::new();
    let scores = [0.9, 0.8, 0.3, 0.2, 0.6, 0.1];
    let labels = [1, 1, 0, 0, 0, 1];
    let pred = fx.predictions("p.csv", &scores, &labels, Some(&[0, 0, 0, 1, 1, 1]));
    let r = json(&voxflow(&["eval", "--pred", p(&pred), "--folds"]));
    assert_eq!(r["confusion"], serde_json::json!({"tp": 2, "fp": 1, "tn": 2, "fn": 1}));
    assert_eq!(r["n"], 6);
    assert!((r["auc"].as_f64().unwrap() - 6.0 / 9.0).abs() < 1e-12);
    assert!((r["mcc"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(r["folds"].as_array().unwrap().len(), 2);
    assert_eq!(r["pooled"]["confusion"], r["confusion"]);

    let other = fx.predictions("q.csv", &[0.7, 0.6, 0.5, 0.4, 0.4, 0.3], &labels, Some(&[0, 0, 0, 1, 1, 1]));
    let mean = json(&voxflow(&["eval", "--pred", p(&pred), "--pred", p(&other), "--threshold", "0.55"]));
    assert_eq!(mean["confusion"], serde_json::json!({"tp": 2, "fp": 0, "tn": 3, "fn": 1}));

    let one = fx.predictions("one.csv", &[0.1, 0.2], &[0, 0], None);
    assert_eq!(code(&voxflow(&["eval", "--pred", p(&one)])), 5);
    let bad = fx.write("bad.csv", "id,score,label\na,0.1,1\n");
    assert_eq!(code(&voxflow(&["eval", "--pred", p(&bad)])), 3);
    assert_eq!(code(&voxflow(&["eval", "--pred", p(&pred), "--threshold", "1.5"])), 3);
}

#[test]
fn calibrate_writes_reliability_table() {
    let fx = Fixture::new();
    let n = 400;
    let scores: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let labels: Vec<u8> = (0..n).map(|i| (i % 7 < 2 + (i * 3) / n) as u8).collect();
    let pred = fx.predictions("p.csv", &scores, &labels, None);
    let (rel, before, cal) = (fx.path("rel.csv"), fx.path("before.csv"), fx.path("cal.csv"));
    let args = [
        "--seed", "3", "calibrate", "--pred", p(&pred), "--bins", "5",
        "--out", p(&rel), "--before", p(&before), "--calibrated", p(&cal),
    ];
    let r = json(&voxflow(&args));
    assert_eq!(r["n_calibrated"], 200);
    assert_eq!(r["n_fit"], 200);
    assert!(r["ece_after"].as_f64().unwrap() < r["ece_before"].as_f64().unwrap());
    let table = fs::read_to_string(&rel).unwrap();
    assert_eq!(table.lines().count(), 6);
    assert_eq!(vio::read_predictions(&cal).unwrap().len(), 200);
    let again = json(&voxflow(&args));
    assert_eq!(r, again);
    let tiny = fx.predictions("tiny.csv", &[0.1, 0.9, 0.5], &[0, 1, 1], None);
    assert_eq!(code(&voxflow(&["calibrate", "--pred", p(&tiny)])), 5);
}

#[test]
fn uncertainty_summarises_classes() {
    let fx = Fixture::new();
    let m = ProbMatrix::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![0, 1, 1],
        4,
        vec![0.1, 0.1, 0.1, 0.1, 0.2, 0.4, 0.6, 0.8, 0.5, 0.5, 0.5, 0.9],
    )
    .unwrap();
    let path = fx.path("m.csv");
    vio::write_probmatrix(fs::File::create(&path).unwrap(), &m).unwrap();
    let r = json(&voxflow(&["uncertainty", "--probmat", p(&path), "--spread", "range", "--out", p(&fx.path("s.csv"))]));
    assert_eq!(r["class_0"]["count"], 1);
    assert_eq!(r["class_0"]["mean_spread"], 0.0);
    assert_eq!(r["class_1"]["count"], 2);
    assert!((r["class_1"]["mean_spread"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(fs::read_to_string(fx.path("s.csv")).unwrap().lines().count(), 4);
}

fn annotated_stack(fx: &Fixture, with_mark: bool) -> PathBuf {
    let s = Shape::new(2, 30, 40, 3);
    let mut data = vec![90u8; s.len()];
    if with_mark {
        for (f, r, c) in [(0, 10, 12), (1, 14, 20), (1, 11, 15)] {
            let o = s.offset(f, r, c);
            data[o..o + 3].copy_from_slice(&[255, 140, 0]);
        }
    }
    let dir = fx.path(if with_mark { "marked" } else { "plain" });
    vio::write_png_stack(&dir, &Volume::from_u8(s, data).unwrap()).unwrap();
    dir
}

#[test]
fn roi_and_stats() {
    let fx = Fixture::new();
    let frames = annotated_stack(&fx, true);
    let (out, cub) = (fx.path("crop.vox1"), fx.path("c.json"));
    let r = json(&voxflow(&["roi", "--frames", p(&frames), "--out", p(&out), "--pad", "2", "--cuboid", p(&cub)]));
    assert_eq!(r, serde_json::json!({"f0": 0, "f1": 2, "r0": 8, "r1": 17, "c0": 10, "c1": 23}));
    assert_eq!(vio::read_vox1(&out).unwrap().shape(), Shape::new(2, 9, 13, 3));

    let csv = fx.write("more.csv", "f0,f1,r0,r1,c0,c1\n0,10,0,20,0,30\n0,4,5,9,5,9\n");
    let s = json(&voxflow(&[
        "roi-stats", "--cuboids", p(&cub), p(&csv), "--bin-width", "4",
        "--out", p(&fx.path("sum.csv")), "--hist", p(&fx.path("hist.csv")),
    ]));
    assert_eq!(s["count"], 3);
    assert_eq!(s["axes"][0]["max"], 10.0);
    assert_eq!(fs::read_to_string(fx.path("sum.csv")).unwrap().lines().count(), 4);

    let plain = annotated_stack(&fx, false);
    let o = voxflow(&["roi", "--frames", p(&plain), "--out", p(&fx.path("none.vox1"))]);
    assert_eq!(code(&o), 5);
    assert_eq!(code(&voxflow(&["roi", "--frames", p(&frames), "--out", p(&out), "--hue-lo", "400"])), 3);
    assert_eq!(code(&voxflow(&["roi-stats", "--cuboids", p(&csv), "--bin-width", "0"])), 3);
}

#[test]
fn heatmap_chain() {
    let fx = Fixture::new();
    let feats = fx.path("f.vox1");
    let n = 2 * 3 * 3 * 4;
    let raw = RawVolume {
        dims: [2, 3, 3, 4],
        data: VolumeData::F32((0..n).map(|i| ((i * 7) % 11) as f32).collect()),
    };
    vio::write_vox1_raw(&feats, &raw).unwrap();
    let input = fx.volume("in.vox1", Shape::new(8, 10, 12, 3), 4);
    let (out, hm) = (fx.path("overlay"), fx.path("hm.vox1"));
    let r = json(&voxflow(&[
        "heatmap", "--features", p(&feats), "--input", p(&input), "--out", p(&out),
        "--png", "--heatmap-out", p(&hm), "--factor", "4", "--alpha", "0.25",
    ]));
    assert_eq!(r["overlay"], serde_json::json!([8, 10, 12, 3]));
    assert_eq!(vio::read_png_stack(&out).unwrap().shape(), Shape::new(8, 10, 12, 3));
    assert_eq!(vio::read_vox1(&hm).unwrap().shape(), Shape::new(2, 3, 3, 3));
    let o = voxflow(&["heatmap", "--features", p(&feats), "--input", p(&input), "--out", p(&fx.path("x.vox1"))]);
    assert_eq!(code(&o), 4);
    let o = voxflow(&["heatmap", "--features", p(&feats), "--input", p(&input), "--out", p(&fx.path("x.vox1")), "--alpha", "2"]);
    assert_eq!(code(&o), 3);
    let o = voxflow(&["heatmap", "--features", p(&input), "--input", p(&input), "--out", p(&fx.path("x.vox1")), "--factor", "4"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn sample_batches() {
    let fx = Fixture::new();
    let mut csv = String::from("sample_id,label\n");
    for i in 0..30 {
        csv.push_str(&format!("s{i},{}\n", (i % 5 == 0) as u8));
    }
    let labels = fx.write("labels.csv", &csv);
    let o = voxflow(&["--seed", "9", "sample", "--labels", p(&labels), "--n", "25"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let batches: Vec<Vec<usize>> = text
        .lines()
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(batches.len(), 25);
    for b in &batches {
        assert_eq!(b.len(), 8);
        assert_eq!(b.iter().filter(|&&i| i % 5 == 0).count(), 2);
    }
    assert_eq!(voxflow(&["--seed", "9", "sample", "--labels", p(&labels), "--n", "25"]).stdout, o.stdout);
    let few = fx.write("few.csv", "sample_id,label\na,1\nb,0\nc,0\nd,0\ne,0\nf,0\ng,0\n");
    assert_eq!(code(&voxflow(&["sample", "--labels", p(&few), "--n", "1", "--pos-frac", "0.5"])), 5);
    assert_eq!(code(&voxflow(&["sample", "--labels", p(&labels), "--n", "1", "--pos-frac", "1.0"])), 3);
}
