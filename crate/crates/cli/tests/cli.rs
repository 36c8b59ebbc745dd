use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spiketrum::corpus::audio_like;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spiketrum"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn spiketrum")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_wav(path: &Path, samples: &[f64], rate: u32) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &v in samples {
        w.write_sample(v as f32).unwrap();
    }
    w.finalize().unwrap();
}

fn clip(dir: &TempDir, duration: f64) -> PathBuf {
    let path = dir.path().join("clip.wav");
    let x = audio_like(duration, 16000.0, 3);
    write_wav(&path, &x.samples, 16000);
    path
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn encode_decode_round_trip() {
    let dir = TempDir::new().unwrap();
    let wav = clip(&dir, 1.5);
    let prefix = dir.path().join("out/clip");
    let o = run(&["encode", s(&wav), "--out", s(&prefix), "--rate", "1000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let spikes = dir.path().join("out/clip.spikes.csv");
    assert_eq!(data_rows(&spikes), 1500);
    assert_eq!(data_rows(&dir.path().join("out/clip.codes.csv")), 1500);
    assert!(dir.path().join("out/clip.spikes.json").exists());

    let decoded = dir.path().join("decoded.wav");
    let o = run(&["decode", s(&spikes), "--out", s(&decoded), "--reference", s(&wav)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("precision"), "{stdout}");
    let r = hound::WavReader::open(&decoded).unwrap();
    assert_eq!(r.len(), 24000);
    assert_eq!(r.spec().sample_rate, 16000);
}

#[test]
fn encoding_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let wav = clip(&dir, 0.3);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for p in [&a, &b] {
        let o = run(&["encode", s(&wav), "--out", s(p), "--rate", "800", "--k-levels", "5"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for suffix in [".codes.csv", ".codes.json", ".spikes.csv", ".spikes.json"] {
        let read = |p: &Path| fs::read(format!("{}{suffix}", p.display())).unwrap();
        assert_eq!(read(&a), read(&b), "{suffix}");
    }
}

#[test]
fn missing_input_exits_with_io_code_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let prefix = dir.path().join("x");
    let o = run(&["encode", s(&dir.path().join("nope.wav")), "--out", s(&prefix)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("nope.wav"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn corrupted_spike_file_reports_the_line() {
    let dir = TempDir::new().unwrap();
    let wav = clip(&dir, 0.2);
    let prefix = dir.path().join("c");
    assert!(run(&["encode", s(&wav), "--out", s(&prefix), "--rate", "200"]).status.success());
    let spikes = dir.path().join("c.spikes.csv");
    let text = fs::read_to_string(&spikes).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[3] = "12,not-a-time";
    fs::write(&spikes, lines.join("\n")).unwrap();
    let out = dir.path().join("c.wav");
    let o = run(&["decode", s(&spikes), "--out", s(&out)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("c.spikes.csv:4:"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn bank_mismatch_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let wav = clip(&dir, 0.2);
    let prefix = dir.path().join("m");
    assert!(run(&["encode", s(&wav), "--out", s(&prefix), "--rate", "200"]).status.success());
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"bank": {"num_kernels": 20}}"#).unwrap();
    let o = run(&[
        "decode",
        s(&dir.path().join("m.spikes.csv")),
        "--out",
        s(&dir.path().join("m.wav")),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("kernel bank mismatch"), "{}", stderr(&o));
}

#[test]
fn invalid_config_exits_with_config_code() {
    let dir = TempDir::new().unwrap();
    let wav = clip(&dir, 0.1);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"bank": {"f_max": 9000}}"#).unwrap();
    let o = run(&["encode", s(&wav), "--out", s(&dir.path().join("o")), "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("f_max"), "{}", stderr(&o));
    fs::write(&cfg, "{ not json").unwrap();
    let o = run(&["encode", s(&wav), "--out", s(&dir.path().join("o")), "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&run(&["encode", "--bogus"])), 2);
}

#[test]
fn zero_spikes_decode_to_silence() {
    let dir = TempDir::new().unwrap();
    let wav = clip(&dir, 0.25);
    let prefix = dir.path().join("z");
    let o = run(&["encode", s(&wav), "--out", s(&prefix), "--n-spikes", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let spikes = dir.path().join("z.spikes.csv");
    fs::write(&spikes, "channel,time_s\n").unwrap();
    let out = dir.path().join("z.wav");
    let o = run(&["decode", s(&spikes), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = hound::WavReader::open(&out).unwrap();
    assert_eq!(r.len(), 4000);
    assert!(r.samples::<f32>().all(|v| v.unwrap() == 0.0));
}

#[test]
fn eval_refuses_oversized_grid() {
    let dir = TempDir::new().unwrap();
    let o = run(&[
        "eval",
        "--lambdas",
        "100:100000:100",
        "--max-iterations",
        "1000",
        "--out",
        s(&dir.path().join("p.csv")),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("max-iterations"), "{}", stderr(&o));
    assert!(!dir.path().join("p.csv").exists());
}

#[test]
fn eval_output_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let o = run(&[
            "eval",
            "--report",
            "precision",
            "--corpus",
            "kernel-sum",
            "--classes",
            "2",
            "--per-class",
            "1",
            "--duration",
            "0.2",
            "--lambdas",
            "100,300",
            "--k-levels",
            "3,5",
            "--strategies",
            "log,linear",
            "--seed",
            "5",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert!(text.starts_with("signal,label,lambda,K,strategy,"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2 * 2);
}

#[test]
fn similarity_needs_two_labels() {
    let dir = TempDir::new().unwrap();
    let o = run(&[
        "eval",
        "--report",
        "similarity",
        "--corpus",
        "audio",
        "--per-class",
        "2",
        "--classes",
        "1",
        "--duration",
        "0.1",
        "--lambdas",
        "200",
        "--out",
        s(&dir.path().join("s.csv")),
    ]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn stream_chirp_writes_segments_and_error_trace() {
    let dir = TempDir::new().unwrap();
    let prefix = dir.path().join("chirp");
    let o = run(&["stream", "--chirp", "--out", s(&prefix), "--compare"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let seg = fs::read_to_string(dir.path().join("chirp.segments.csv")).unwrap();
    let rows: Vec<&str> = seg.lines().skip(1).collect();
    assert_eq!(rows.len(), (5.0f64 * 16000.0 / 696.0).ceil() as usize);
    for r in &rows {
        let f: Vec<&str> = r.split(',').collect();
        let budget: usize = f[3].parse().unwrap();
        let emitted: usize = f[4].parse().unwrap();
        assert!(emitted <= budget);
    }
    assert_eq!(data_rows(&dir.path().join("chirp.error.csv")), 80000);
    assert!(dir.path().join("chirp.spikes.json").exists());
}

#[test]
fn stream_rejects_channel_count_off_the_grid() {
    let dir = TempDir::new().unwrap();
    let o = run(&["stream", "--chirp", "--out", s(&dir.path().join("c")), "--channels", "100"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn kernels_writes_bank_description() {
    let dir = TempDir::new().unwrap();
    let o = run(&["kernels", "--out-dir", s(dir.path()), "--num-kernels", "12"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_rows(&dir.path().join("centers.csv")), 12);
    let bank: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bank.json")).unwrap()).unwrap();
    assert_eq!(bank["kernel_lengths"].as_array().unwrap().len(), 12);
    assert_eq!(bank["fingerprint"].as_str().unwrap().len(), 16);
    let total: usize = bank["kernel_lengths"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as usize)
        .sum();
    assert_eq!(data_rows(&dir.path().join("kernels.csv")), total);
}

#[test]
fn train_classify_and_sta() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("model.json");
    let report = dir.path().join("epochs.csv");
    let o = run(&[
        "train",
        "--out",
        s(&model),
        "--classes",
        "2",
        "--per-class",
        "3",
        "--duration",
        "0.15",
        "--epochs",
        "5",
        "--report",
        s(&report),
        "--seed",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!((1..=5).contains(&data_rows(&report)));

    let preds = dir.path().join("preds.csv");
    let o = run(&["classify", "--model", s(&model), "--out", s(&preds), "--snr-db", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_rows(&preds), 6);
    assert!(String::from_utf8_lossy(&o.stdout).contains("accuracy"));

    let sta = dir.path().join("sta.csv");
    let o = run(&["sta", "--model", s(&model), "--neuron", "0", "--out", s(&sta)]);
    // An untrained or silent neuron has no output spikes to average over.
    if o.status.success() {
        assert!(fs::read_to_string(&sta).unwrap().starts_with("channel,dt_bin,count"));
    } else {
        assert_eq!(code(&o), 4, "{}", stderr(&o));
    }
    let o = run(&["sta", "--model", s(&model), "--neuron", "99", "--out", s(&sta)]);
    assert_eq!(code(&o), 2);
}
