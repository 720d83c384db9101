use isac_ident::dataset::{generate_dataset_with_stats, generate_frames, to_radar_frame, Mode, ScenarioConfig};
use isac_ident::detect::detect_objects;
use isac_ident::radar::{read_cube, synthesize_frame, write_cube};
use isac_ident::rng::{derive_seed, stream};
use isac_ident::SPEED_OF_LIGHT;

fn reduced() -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        seed: 3,
        n_sequences: 2,
        min_samples_per_sequence: 5,
        max_samples_per_sequence: 5,
        max_candidates: 3,
        ..ScenarioConfig::default()
    };
    cfg.radar.n_chirps = 64;
    cfg.radar.n_samples = 256;
    cfg.radar.sample_rate_hz /= 2.0;
    cfg.radar.noise_floor = 1e-9;
    cfg
}

#[test]
fn full_mode_label_points_at_the_user() {
    let cfg = reduced();
    let (samples, stats) = generate_dataset_with_stats(&cfg, Mode::Full).unwrap();
    assert!(stats.n_samples >= 5, "{stats:?}");
    let frames = generate_frames(&cfg).unwrap();
    let rc = &cfg.radar;
    // Bin widths from the waveform parameters.
    let range_bin = SPEED_OF_LIGHT * rc.sample_rate_hz / (2.0 * rc.slope_hz_per_s * rc.n_samples as f64);
    let wavelength = SPEED_OF_LIGHT / rc.carrier_hz;
    let vel_bin = wavelength / (2.0 * rc.n_chirps as f64 * (rc.chirp_duration_s + rc.inter_chirp_wait_s));
    for s in &samples {
        let f = frames.iter().find(|f| f.sample_id == s.sample_id).unwrap();
        let user = to_radar_frame(&f.objects[0], cfg.misalignment_deg);
        let t = s.target();
        assert!((t.range_m - user.range()).abs() <= 2.0 * range_bin, "{t:?} vs {user:?}");
        assert!((t.velocity_mps - user.radial_velocity()).abs() <= 2.0 * vel_bin, "{t:?} vs {user:?}");
        // Distortion of at most 3 deg plus angle-bin quantization near boresight.
        assert!((t.angle_deg - user.azimuth_deg()).abs() <= 3.0 + 4.0, "{t:?} vs {user:?}");
        assert_eq!(s.beam, f.beam);
    }
}

#[test]
fn stored_cube_detects_like_the_original() {
    let cfg = reduced();
    let frame = &generate_frames(&cfg).unwrap()[0];
    let scene: Vec<_> = frame.objects.iter().map(|o| to_radar_frame(o, cfg.misalignment_deg)).collect();
    let cube = synthesize_frame(&scene, &cfg.radar, derive_seed(cfg.seed, stream::FRAME)).unwrap();
    let mut bytes = Vec::new();
    write_cube(&cube, &mut bytes).unwrap();
    let back = read_cube(bytes.as_slice(), &cfg.radar).unwrap();

    let a = detect_objects(&cube, &cfg.detect).unwrap();
    let b = detect_objects(&back, &cfg.detect).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.range_m, x.angle_deg, x.velocity_mps), (y.range_m, y.angle_deg, y.velocity_mps));
        assert!((x.power / y.power - 1.0).abs() < 1e-5);
    }
}
