//! End-to-end runs of the `cyclegan-sn` binary against the synthetic fixture.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cyclegan_sn::fid::WeightedFid;
use cyclegan_sn::losses::LossReport;
use cyclegan_sn::trainer::{read_log, write_log, LogEntry};
use image::codecs::gif::GifEncoder;
use image::{Delay, Frame, Rgba, RgbaImage};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cyclegan-sn"))
}

fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    bin().args(args).output().expect("spawn binary")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status, stdout(o), stderr(o));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// 30 one-second frames; the first three are black.
fn write_video(path: &Path) {
    let mut enc = GifEncoder::new(std::fs::File::create(path).unwrap());
    for i in 0..30u8 {
        let v = if i < 3 { 0 } else { 60 + 6 * i };
        let img = RgbaImage::from_fn(24, 24, |x, y| Rgba([v, v.wrapping_add(x as u8), v.wrapping_add(y as u8), 255]));
        enc.encode_frame(Frame::from_parts(img, 0, 0, Delay::from_numer_denom_ms(1000, 1)))
            .unwrap();
    }
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn prepare_from_videos_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let videos = dir.path().join("v");
    std::fs::create_dir_all(&videos).unwrap();
    write_video(&videos.join("clip.gif"));
    let out = dir.path().join("data/cartoon");
    let args = [
        "prepare", "--videos", p(&videos), "--out", p(&out), "--fps", "1", "--trim", "0.05", "--dark", "0.15",
        "--size", "16",
    ];
    let first = run(args);
    assert_ok(&first);
    assert!(stdout(&first).contains("# resolved configuration"));
    let manifest = std::fs::read(out.join("train/manifest.json")).unwrap();
    let val_manifest = std::fs::read(out.join("val/manifest.json")).unwrap();
    assert!(out.join("prepare.toml").is_file());
    // 30 sampled, 1.5 s trimmed at each end, 3 dark frames: 2, 3 (dark), 28, 29 (trim) and 0, 1.
    let frames: Vec<_> = files(&out.join("frames")).into_iter().filter(|f| f.extension().unwrap() == "png").collect();
    assert_eq!(frames.len(), 25);
    let img = image::open(files(&out.join("train")).iter().find(|f| f.extension().unwrap() == "png").unwrap()).unwrap();
    assert_eq!((img.width(), img.height()), (16, 16));

    let refused = run(args);
    assert!(!refused.status.success());
    assert!(stderr(&refused).contains("--force"), "{}", stderr(&refused));

    let mut forced = args.to_vec();
    forced.push("--force");
    assert_ok(&run(&forced));
    assert_eq!(std::fs::read(out.join("train/manifest.json")).unwrap(), manifest);
    assert_eq!(std::fs::read(out.join("val/manifest.json")).unwrap(), val_manifest);
}

#[test]
fn prepare_from_images_splits_disjointly() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    common::write_raw(&raw, cyclegan_sn::imagedata::Domain::Real, 12, 4);
    let out = dir.path().join("real");
    let o = run([
        "prepare", "--images", p(&raw), "--domain", "real", "--out", p(&out), "--size", "16", "--train", "8", "--val",
        "4",
    ]);
    assert_ok(&o);
    let names = |split: &str| -> Vec<String> {
        files(&out.join(split))
            .into_iter()
            .filter(|f| f.extension().unwrap() == "png")
            .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
            .collect()
    };
    let (train, val) = (names("train"), names("val"));
    assert_eq!((train.len(), val.len()), (8, 4));
    assert!(train.iter().all(|t| !val.contains(t)));
}

#[test]
fn prepare_missing_dir_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-videos");
    let o = run(["prepare", "--videos", p(&missing), "--out", p(&dir.path().join("out"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no-such-videos"), "{}", stderr(&o));
}

fn train_args(fx: &common::Fixture, out: &Path) -> Vec<String> {
    [
        "train",
        "--preset",
        "toy",
        "--out",
        p(out),
        "--cartoon-train",
        p(&fx.cartoon_train),
        "--real-train",
        p(&fx.real_train),
        "--cartoon-val",
        p(&fx.cartoon_val),
        "--real-val",
        p(&fx.real_val),
        "--max-steps-per-epoch",
        "3",
    ]
    .map(String::from)
    .to_vec()
}

#[test]
fn train_resume_translate_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::Fixture::build(&dir.path().join("fx"));
    let out = dir.path().join("run");
    let args = train_args(&fx, &out);

    let o = run(&args);
    assert_ok(&o);
    let log_path = out.join("train_log.ndjson");
    let log = read_log(&log_path).unwrap();
    assert_eq!(log.len(), 6);
    assert!(log.iter().filter(|e| e.fid.is_some()).count() >= 1);
    assert!(out.join("checkpoints/latest/state.json").is_file());
    assert!(out.join("checkpoints/best/state.json").is_file());
    assert!(out.join("train.toml").is_file());
    let fid_line = stdout(&o).lines().find(|l| l.contains("FID")).unwrap().to_string();
    let value = fid_line.split("weighted FID ").nth(1).unwrap().split(' ').next().unwrap();
    assert_eq!(value.split('.').nth(1).map(str::len), Some(4), "{fid_line}");

    let refused = run(&args);
    assert!(!refused.status.success(), "second run without --force must refuse");

    let mut resume = args.clone();
    resume.extend(["--resume", "latest", "--epochs", "3"].map(String::from));
    assert_ok(&run(&resume));
    let log = read_log(&log_path).unwrap();
    let steps: Vec<u64> = log.iter().map(|e| e.step).collect();
    assert_eq!(steps, (1..=9).collect::<Vec<u64>>());
    assert_eq!(log.last().unwrap().epoch, 2);

    let checkpoint = out.join("checkpoints/latest");
    let t1 = dir.path().join("t1");
    let t2 = dir.path().join("t2");
    for t in [&t1, &t2] {
        assert_ok(&run([
            "translate", "--checkpoint", p(&checkpoint), "--input", p(&fx.cartoon_val), "--out", p(t),
        ]));
    }
    let inputs: Vec<_> = files(&fx.cartoon_val)
        .into_iter()
        .filter(|f| f.extension().unwrap() == "png")
        .map(|f| f.file_name().unwrap().to_owned())
        .collect();
    let outputs: Vec<_> = files(&t1)
        .into_iter()
        .filter(|f| f.extension().unwrap() == "png")
        .map(|f| f.file_name().unwrap().to_owned())
        .collect();
    assert_eq!(inputs, outputs);
    for name in &outputs {
        assert_eq!(std::fs::read(t1.join(name)).unwrap(), std::fs::read(t2.join(name)).unwrap());
    }
    let refused = run([
        "translate", "--checkpoint", p(&checkpoint), "--input", p(&fx.cartoon_val), "--out", p(&t1),
    ]);
    assert!(!refused.status.success());

    let chart = dir.path().join("plots/fid.svg");
    assert_ok(&run(["plot-fid", "--log", p(&log_path), "--out", p(&chart)]));
    assert!(chart.is_file());
}

#[test]
fn negative_lambda_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run([
        "train", "--preset", "toy", "--out", p(&out), "--cartoon-train", "/nonexistent/a", "--real-train",
        "/nonexistent/b", "--lambda-cyc", "-1",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("lambda_cyc"), "{}", stderr(&o));
    assert!(!out.join("train_log.ndjson").exists());
}

#[test]
fn fid_prints_four_decimals() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::Fixture::build(&dir.path().join("fx"));
    let out = dir.path().join("score");
    let args = [
        "fid", "--generated", p(&fx.cartoon_val), "--real", p(&fx.real_val), "--cartoon", p(&fx.cartoon_train),
        "--extractor", "test_linear", "--size", "32", "--out", p(&out),
    ];
    let o = run(args);
    assert_ok(&o);
    let text = stdout(&o);
    for label in ["FID vs target: ", "FID vs input: "] {
        let line = text.lines().find(|l| l.starts_with(label)).unwrap_or_else(|| panic!("{text}"));
        let value = &line[label.len()..];
        assert_eq!(value.split('.').nth(1).map(str::len), Some(4), "{line}");
        assert!(value.parse::<f64>().unwrap() >= 0.0);
    }
    assert!(text.contains("weighted FID"));
    assert!(out.join("score.json").is_file());
    assert!(!run(args).status.success(), "rerun without --force must refuse");
}

fn entry(step: u64, epoch: u64, fid: Option<f64>) -> LogEntry {
    LogEntry {
        step,
        epoch,
        losses: LossReport::default(),
        fid: fid.map(|s| WeightedFid {
            score: s,
            vs_target: s * 1.1,
            vs_input: s * 0.6,
        }),
    }
}

#[test]
fn plot_csv_matches_log_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("train_log.ndjson");
    let scores = [91.123456789, 70.5, 55.25, 40.0 + 1.0 / 3.0];
    let entries: Vec<LogEntry> = scores
        .iter()
        .enumerate()
        .flat_map(|(e, &s)| [entry(2 * e as u64 + 1, e as u64, None), entry(2 * e as u64 + 2, e as u64, Some(s))])
        .collect();
    write_log(&log, &entries).unwrap();
    let chart = dir.path().join("fid.svg");
    assert_ok(&run(["plot-fid", "--log", p(&log), "--out", p(&chart)]));

    let svg = std::fs::read_to_string(&chart).unwrap();
    assert!(svg.contains("epoch") && svg.contains("FID"));
    let csv = std::fs::read_to_string(chart.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epoch,fid_weighted,fid_vs_target,fid_vs_input"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 4);
    for (i, row) in rows.iter().enumerate() {
        let f = entries[2 * i + 1].fid.unwrap();
        assert_eq!(row, &vec![(i + 1) as f64, f.score, f.vs_target, f.vs_input]);
    }

    let again = run(["plot-fid", "--log", p(&log), "--out", p(&chart)]);
    assert!(!again.status.success());
    assert_ok(&run(["plot-fid", "--log", p(&log), "--out", p(&chart), "--force"]));
}

#[test]
fn plot_without_fid_entries_fails() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("train_log.ndjson");
    write_log(&log, &[entry(1, 0, None), entry(2, 0, None)]).unwrap();
    let chart = dir.path().join("fid.svg");
    let o = run(["plot-fid", "--log", p(&log), "--out", p(&chart)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no FID entries"), "{}", stderr(&o));
    assert!(!chart.exists());
}
