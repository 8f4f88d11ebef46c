use std::fs::File;
use std::io::BufReader;

use mural_core::active::{read_transcript, run_simulated, write_transcript, Session, SessionConfig};
use mural_core::signal_io::standardize;
use mural_core::synth::{generate, ChangeKind, SynthSpec};
use mural_core::{Detector, DetectorConfig};

#[test]
fn feedback_does_not_hurt_on_easy_data() {
    let mut first = 0.0;
    let mut last = 0.0;
    for seed in 0..4 {
        let (x, truth) = generate(&SynthSpec::mean_shift(2048, 2, 5, 3.0, seed)).unwrap();
        let sim = run_simulated(
            &standardize(&x),
            &truth,
            &DetectorConfig::new(3, 20),
            SessionConfig::new(20, 16, seed),
        )
        .unwrap();
        first += sim.curve[0].f1;
        last += sim.curve[16].f1;
    }
    assert!(last >= first, "initial {first} final {last}");
}

#[test]
fn session_survives_a_restart_from_its_transcript() {
    let spec = SynthSpec {
        kinds: vec![ChangeKind::Mean, ChangeKind::Variance],
        ..SynthSpec::mean_shift(2048, 2, 6, 1.5, 8)
    };
    let (x, truth) = generate(&spec).unwrap();
    let x = standardize(&x);
    let dc = DetectorConfig::new(3, 20);
    let mut cfg = SessionConfig::new(20, 14, 3);
    cfg.warmup = 4;
    let sim = run_simulated(&x, &truth, &dc, cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.jsonl");
    write_transcript(&sim.transcript, File::create(&path).unwrap()).unwrap();
    let events = read_transcript(BufReader::new(File::open(&path).unwrap())).unwrap();

    let features = Detector::new(dc).features(&x).unwrap();
    let restored = Session::replay(features, &events).unwrap();
    assert_eq!(restored.params(), sim.session.params());
    assert_eq!(restored.detections(), sim.session.detections());
    assert_eq!(restored.annotations(), sim.session.annotations());
    assert_eq!(restored.queries_used(), 14);
}
