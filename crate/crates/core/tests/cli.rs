use std::fs;
use std::path::{Path, PathBuf};

use msa_transducer::cli::{load_data_dir, main_with, DATA_CONFIG};
use msa_transducer::decoding::{NGramLm, DEFAULT_MAX_SYMBOLS};
use msa_transducer::features::{read_feature_dump, write_feature_dump, write_wav, FeatureConfig, SynthTask};
use msa_transducer::streaming::{SearchMode, StreamSession};
use msa_transducer::train::TrainConfig;
use msa_transducer::transducer::{save_checkpoint, TransducerModel, Vocabulary};
use msa_transducer::Error;
use tempfile::TempDir;

fn msa(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with(std::iter::once("msa").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Untrained desk model saved to `<dir>/model`.
fn desk_checkpoint(dir: &Path, cfg: &TrainConfig) -> (TransducerModel, PathBuf) {
    let model = TransducerModel::new(cfg.model.clone(), Vocabulary::graphemes(), 3).unwrap();
    let path = dir.join("model");
    save_checkpoint(&model, &path).unwrap();
    (model, path)
}

fn synth(dir: &Path, count: usize) -> PathBuf {
    let data = dir.join("data");
    let (code, _, err) = msa(&["synth-data", "--out", p(&data), "--count", &count.to_string()]);
    assert_eq!(code, 0, "{err}");
    data
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(msa(&[]).0, 1);
    assert_eq!(msa(&["frobnicate"]).0, 1);
    assert_eq!(msa(&["train", "--run-dir", "x"]).0, 1);
    let tmp = TempDir::new().unwrap();
    let (code, _, err) = msa(&["bench", "--run-dir", p(tmp.path()), "--variants", "gru"]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown variant"), "{err}");
    let (code, _, _) = msa(&["train", "--stage", "pretrain", "--run-dir", p(tmp.path())]);
    assert_eq!(code, 1);
}

#[test]
fn help_and_version_exit_zero() {
    let (code, out, _) = msa(&["--help"]);
    assert_eq!(code, 0);
    for cmd in ["train", "decode", "stream", "bench", "lm-train", "synth-data"] {
        assert!(out.contains(cmd), "help lists {cmd}");
    }
    assert_eq!(msa(&["--version"]).0, 0);
}

#[test]
fn data_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), 2);
    let missing = tmp.path().join("no-such-checkpoint");
    let (code, _, _) = msa(&["decode", "--checkpoint", p(&missing), "--data", p(&data), "--run-dir", p(tmp.path())]);
    assert_eq!(code, 2);
    // fine-tuning without pretraining stages
    let (code, _, err) = msa(&["train", "--stage", "rnnt-finetune", "--run-dir", p(tmp.path()), "--train-size", "4"]);
    assert_eq!(code, 2);
    assert!(err.contains("ctc-pretrain"), "{err}");
}

#[test]
fn non_finite_features_exit_three() {
    let tmp = TempDir::new().unwrap();
    let (_, ckpt) = desk_checkpoint(tmp.path(), &TrainConfig::default());
    let data = synth(tmp.path(), 2);
    let blob = data.join("u00001.f32");
    let mut dump = read_feature_dump(&blob).unwrap();
    dump.features.data_mut()[5] = f64::NAN;
    write_feature_dump(&blob, &dump).unwrap();
    let (code, _, err) = msa(&["decode", "--checkpoint", p(&ckpt), "--data", p(&data), "--run-dir", p(tmp.path())]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn synth_data_round_trips_and_detects_config_drift() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), 5);
    let loaded = load_data_dir(&data).unwrap();
    let cfg = TrainConfig::default().data;
    let task = SynthTask::new(cfg.synth.clone()).unwrap();
    assert_eq!(loaded.ids.len(), 5);
    for (i, (text, f)) in loaded.texts.iter().zip(&loaded.features).enumerate() {
        let u = task.utterance(msa_transducer::train::VALID_SEED_BASE + i as u64);
        assert_eq!(*text, task.vocab().decode(&u.labels));
        assert!(f.max_abs_diff(&u.features) < 1e-6, "fp32 dump");
    }
    let text = fs::read_to_string(data.join(DATA_CONFIG)).unwrap().replace("sigma = 0.5", "sigma = 0.25");
    fs::write(data.join(DATA_CONFIG), text).unwrap();
    assert!(matches!(load_data_dir(&data), Err(Error::Config(_))));
}

#[test]
fn bench_csv_schema_is_stable() {
    let tmp = TempDir::new().unwrap();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let (code, out, err) = msa(&["bench", "--run-dir", p(&dir), "--lengths", "32,64"]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("memory-sa"));
        runs.push(fs::read_to_string(dir.join("bench.csv")).unwrap());
    }
    let strip = |csv: &str| -> Vec<Vec<String>> {
        csv.lines()
            .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != 3).map(|(_, c)| c.to_string()).collect())
            .collect()
    };
    let lines: Vec<&str> = runs[0].lines().collect();
    assert_eq!(lines[0], "variant,T,macs,wall_ms,fit_linear_r2,fit_quadratic_r2");
    assert_eq!(lines.len(), 1 + 6 * 2, "all six variants at both lengths");
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 6));
    assert_eq!(strip(&runs[0]), strip(&runs[1]), "everything but wall time repeats");
}

#[test]
fn decode_beam_one_matches_streaming_greedy() {
    let tmp = TempDir::new().unwrap();
    let (model, ckpt) = desk_checkpoint(tmp.path(), &TrainConfig::default());
    let data = synth(tmp.path(), 4);
    let run = tmp.path().join("run");
    let (code, _, err) = msa(&["decode", "--checkpoint", p(&ckpt), "--data", p(&data), "--run-dir", p(&run), "--beam", "1"]);
    assert_eq!(code, 0, "{err}");
    let hyps = fs::read_to_string(run.join("hyps.txt")).unwrap();
    let loaded = load_data_dir(&data).unwrap();
    for (line, f) in hyps.lines().zip(&loaded.features) {
        let mut s = StreamSession::new(&model, SearchMode::Greedy { max_symbols: DEFAULT_MAX_SYMBOLS }, None).unwrap();
        for r in f.rows() {
            s.push(r).unwrap();
        }
        s.flush().unwrap();
        assert_eq!(line.split_once('\t').unwrap().1, model.vocab.decode(s.transcript()));
    }
}

#[test]
fn lambda_zero_equals_no_lm() {
    let tmp = TempDir::new().unwrap();
    let (_, ckpt) = desk_checkpoint(tmp.path(), &TrainConfig::default());
    let data = synth(tmp.path(), 3);
    let lm = tmp.path().join("lm.txt");
    assert_eq!(msa(&["lm-train", "--text", p(&data.join("transcripts.txt")), "--out", p(&lm)]).0, 0);
    for mode in ["ctc", "rnnt"] {
        let decode = |run: &Path, extra: &[&str]| {
            let mut args = vec!["decode", "--checkpoint", p(&ckpt), "--data", p(&data), "--run-dir", p(run), "--mode", mode, "--beam", "3"];
            args.extend_from_slice(extra);
            let (code, _, err) = msa(&args);
            assert_eq!(code, 0, "{err}");
            fs::read(run.join("hyps.txt")).unwrap()
        };
        let plain = decode(&tmp.path().join(format!("{mode}-plain")), &[]);
        let fused = decode(&tmp.path().join(format!("{mode}-zero")), &["--lm", p(&lm), "--lambda", "0"]);
        assert_eq!(plain, fused, "{mode}");
    }
}

#[test]
fn lm_vocab_mismatch_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let (_, ckpt) = desk_checkpoint(tmp.path(), &TrainConfig::default());
    let data = synth(tmp.path(), 2);
    let small = Vocabulary::from_symbols(["<blank>", "<sos>", "A", "B"].map(String::from).to_vec()).unwrap();
    let lm = tmp.path().join("lm.txt");
    NGramLm::train(&[vec![2, 3, 2]], &small, 2, 0.1).unwrap().save(&lm).unwrap();
    let (code, _, err) = msa(&["decode", "--checkpoint", p(&ckpt), "--data", p(&data), "--run-dir", p(tmp.path()), "--lm", p(&lm)]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn feature_width_mismatch_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let (_, ckpt) = desk_checkpoint(tmp.path(), &TrainConfig::audio());
    let data = synth(tmp.path(), 2);
    let (code, _, err) = msa(&["decode", "--checkpoint", p(&ckpt), "--data", p(&data), "--run-dir", p(tmp.path())]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("expects 24"), "{err}");
}

#[test]
fn stream_emits_before_end_of_input() {
    let tmp = TempDir::new().unwrap();
    let cfg = TrainConfig::audio();
    let (_, ckpt) = desk_checkpoint(tmp.path(), &cfg);
    let task = SynthTask::new(cfg.data.synth.clone()).unwrap();
    let rate = FeatureConfig::desk().sample_rate_hz;
    let mut pcm = Vec::new();
    let mut seed = 0;
    while pcm.len() < 3 * rate as usize {
        pcm.extend(task.audio(seed).0);
        seed += 1;
    }
    pcm.truncate(3 * rate as usize);
    let wav = tmp.path().join("three-seconds.wav");
    write_wav(&wav, &pcm, rate).unwrap();
    let args = msa_transducer::cli::StreamArgs {
        checkpoint: ckpt,
        wav,
        features: None,
        beam: 1,
        lm: None,
        lambda: 0.0,
        chunk_ms: 10.0,
    };
    let mut out = Vec::new();
    let report = msa_transducer::cli::cmd_stream(&args, &mut out).unwrap();
    assert!(report.emitted_before_end > 0);
    assert!(report.events.first().unwrap().audio_secs < 3.0);
    assert_eq!(report.feature_frames, 298);
    assert!(String::from_utf8(out).unwrap().contains("transcript:"));
}
