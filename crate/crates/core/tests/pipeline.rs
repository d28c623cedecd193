use classtrack_core::io::{parse_detections, parse_tracks, track_records, write_detections, write_tracks, DetectionsFile, DetectionsHeader};
use classtrack_core::{generate, Mode, ScenarioConfig, TrackStatus, Tracker, TrackerConfig};

fn scenario(frames: usize, walk: f64) -> ScenarioConfig {
    ScenarioConfig {
        num_frames: frames,
        walk_sigma: walk,
        ..Default::default()
    }
}

#[test]
fn tracker_follows_a_random_walk() {
    let sc = generate(&scenario(40, 3.0)).unwrap();
    let reports = Tracker::new(TrackerConfig::default()).unwrap().run(&sc.frames).unwrap();
    let ids: std::collections::BTreeSet<u64> = reports.iter().flat_map(|r| r.tracks.iter().map(|t| t.id)).collect();
    assert_eq!(ids.len(), 1);
    let mut sq = 0.0;
    for (rep, truth) in reports.iter().zip(&sc.truth.frames) {
        let t = &rep.tracks[0];
        assert_eq!(t.status, TrackStatus::Active);
        sq += (t.box_state.mean.px() - truth.bbox.px()).powi(2);
    }
    let rmse = (sq / reports.len() as f64).sqrt();
    assert!(rmse < 5.0, "rmse {rmse}");
}

#[test]
fn file_round_trip_preserves_tracking() {
    let cfg = scenario(6, 1.0);
    let sc = generate(&cfg).unwrap();
    let file = DetectionsFile::new(
        DetectionsHeader {
            classes: cfg.names(),
            image_size: cfg.image_size,
        },
        sc.frames.clone(),
    );
    let mut buf = Vec::new();
    write_detections(&file, &mut buf).unwrap();
    let back = parse_detections(std::str::from_utf8(&buf).unwrap(), false).unwrap();
    assert_eq!(back.frames, sc.frames);

    for mode in [Mode::Robust, Mode::Standard] {
        let cfg = TrackerConfig::default().with_mode(mode);
        let a = Tracker::new(cfg.clone()).unwrap().run(&sc.frames).unwrap();
        let b = Tracker::new(cfg).unwrap().run(&back.frames).unwrap();
        assert_eq!(a, b);
        let mut out = Vec::new();
        write_tracks(&a, &mut out).unwrap();
        let records = parse_tracks(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(records, track_records(&a));
        for r in &records {
            let sum: f64 = r.pmf.probs().iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(r.box_cov.eigenvalues().iter().all(|&e| e >= -1e-9));
        }
    }
}
