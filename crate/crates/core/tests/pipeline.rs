use spiketrum::corpus::{audio_like, event_corpus};
use spiketrum::io::{read_codeset, read_spiketrum, write_codeset, write_spiketrum};
use spiketrum::snn::{sta_from_post_spikes, Checkpoint};
use spiketrum::stream::stream_codes;
use spiketrum::*;

fn bank() -> KernelBank {
    KernelBank::build(KernelBankConfig::default()).unwrap()
}

fn scratch(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("spiketrum-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d.join(name)
}

#[test]
fn encode_write_read_decode() {
    let bank = bank();
    let x = audio_like(0.4, 16000.0, 1);
    let codes = encode(&x, &bank, &EncoderParams::with_rate(1200.0, 0.0)).unwrap();
    assert_eq!(codes.len(), 480);

    let cpath = scratch("codes.csv");
    write_codeset(&cpath, &codes).unwrap();
    let back = read_codeset(&cpath).unwrap();
    assert_eq!(back.codes, codes.codes);
    let y1 = reconstruct(&codes, &bank, x.duration()).unwrap();
    let y2 = reconstruct(&back, &bank, x.duration()).unwrap();
    assert_eq!(y1, y2);

    let map = make_intensity_map(&codes, 30, Strategy::Log).unwrap();
    let spikes = itp_encode(&codes, &map, bank.len()).unwrap();
    let spath = scratch("spikes.csv");
    write_spiketrum(&spath, &spikes).unwrap();
    let spikes_back = read_spiketrum(&spath).unwrap();
    assert_eq!(spikes_back, spikes);
    let decoded = itp_decode(&spikes_back).unwrap();
    let p_analog = precision(&x, &y1).unwrap();
    let p_spikes = precision(&x, &reconstruct(&decoded, &bank, x.duration()).unwrap()).unwrap();
    assert!(p_analog > 0.9);
    assert!((p_analog - p_spikes).abs() < 0.05, "{p_analog} vs {p_spikes}");
}

#[test]
fn sidecar_fingerprint_matches_bank() {
    let bank = bank();
    let x = audio_like(0.1, 16000.0, 2);
    let codes = encode(&x, &bank, &EncoderParams::with_rate(500.0, 0.0)).unwrap();
    let path = scratch("fp.csv");
    write_codeset(&path, &codes).unwrap();
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap())
            .unwrap();
    assert_eq!(side["bank_fingerprint"], bank.fingerprint());
    assert_eq!(side["sample_rate"], 16000.0);
}

#[test]
fn stream_and_whole_encoders_agree_on_totals() {
    let bank = bank();
    let x = audio_like(0.3, 16000.0, 3);
    let cfg = StreamConfig::default();
    let out = stream_codes(&x, &bank, &cfg).unwrap();
    let seg = cfg.segment_samples();
    let full_segments = x.len() / seg;
    let last = (x.len() % seg) * cfg.spikes_per_segment_budget / seg;
    assert_eq!(
        out.codes.len(),
        full_segments * cfg.spikes_per_segment_budget + last
    );
    let spikes = stream_encode(&x, &bank, &cfg).unwrap();
    assert_eq!(spikes.len(), out.codes.len());
    assert_eq!(spikes.num_channels(), cfg.k * cfg.m);
}

#[test]
fn trained_readout_survives_checkpoint() {
    let bank = bank();
    let data: Vec<(Spiketrum, usize)> = event_corpus(2, 4, 0.2, 16000.0, 5)
        .into_iter()
        .map(|(x, l)| {
            let c = encode(&x, &bank, &EncoderParams::with_rate(400.0, 0.0)).unwrap();
            let map = make_intensity_map(&c, 3, Strategy::Log).unwrap();
            (itp_encode(&c, &map, bank.len()).unwrap(), l)
        })
        .collect();
    let groups = ReadoutGroups::uniform(&[0, 1], 2);
    let mut neurons = spiketrum::snn::init_neurons(4, 120, 0.01, 1);
    let report = tempotron_train(&mut neurons, &data, &groups, 50, 0.02, 1).unwrap();
    assert!(*report.accuracy.last().unwrap() >= 0.75);

    let ck = Checkpoint {
        neurons: neurons.clone(),
        groups: groups.clone(),
    };
    let text = serde_json::to_string(&ck).unwrap();
    let back: Checkpoint = serde_json::from_str(&text).unwrap();
    for (p, _) in &data {
        assert_eq!(
            classify(&back.neurons, &back.groups, p).unwrap(),
            classify(&neurons, &groups, p).unwrap()
        );
    }

    let post: Vec<(&Spiketrum, Vec<f64>)> = data
        .iter()
        .map(|(p, _)| {
            let spikes = neurons
                .iter()
                .flat_map(|n| spiketrum::snn::respond(n, p).unwrap().spikes)
                .collect();
            (p, spikes)
        })
        .collect();
    let sta = sta_from_post_spikes(&post, 120, 0.12, 0.005).unwrap();
    assert_eq!(sta.joint.len(), 120);
    assert_eq!(sta.channel_marginal.iter().sum::<u64>(), sta.total());
}
