//! Real-time spray control loop: latency budget, nozzle state machines, pass
//! simulation, coverage and herbicide usage.

mod latency;
mod nozzle;
mod pass;

pub use latency::{sample_total_latency, LatencyProfile, StageDelay};
pub use nozzle::{Nozzle, NozzleMode, NozzleState, SprayEvent};
pub use pass::{
    calibrated_flow_rate, coverage_hits, simulate_pass, simulate_trial, usage_l_per_ha, Coverage,
    PassConfig, PassGeometry, PassLog, SprayDuration,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectorProfile;
    use crate::fieldgen::{generate_field, layout_trial, FieldSpec, SpeciesClass, Strip, Treatment, WeedInstance};
    use crate::geometry::{displacement_during, CameraConfig, Speed, TileGrid};
    use approx::assert_abs_diff_eq;

    fn config(detector: DetectorProfile) -> PassConfig {
        let speed = Speed::from_kmh(8.0).unwrap();
        let grid = TileGrid::split(1.6).unwrap();
        PassConfig {
            camera: CameraConfig::default(),
            flow_rate_lps: calibrated_flow_rate(200.0, grid.tile_width(), speed).unwrap(),
            grid,
            detector,
            latency: LatencyProfile::default().deterministic(),
            speed,
            spray_duration: SprayDuration::default(),
        }
    }

    fn strip(treatment: Treatment, rows: usize, length: f64) -> Strip {
        let mut s = layout_trial(2, rows, 1.6, length, treatment).unwrap().strips[0];
        s.treatment = treatment;
        s
    }

    fn weed(id: u64, along: f64, cross: f64) -> WeedInstance {
        WeedInstance {
            id,
            species: SpeciesClass::Nutgrass,
            along_m: along,
            cross_m: cross,
            detectability: 1.0,
        }
    }

    #[test]
    fn flow_calibration_reproduces_blanket_rate() {
        let speed = Speed::from_kmh(8.0).unwrap();
        let flow = calibrated_flow_rate(200.0, 0.8, speed).unwrap();
        assert_abs_diff_eq!(flow, 0.03556, epsilon = 1e-5);
        let s = strip(Treatment::Blanket, 4, 100.0);
        let mut cfg = config(DetectorProfile::perfect());
        cfg.flow_rate_lps = 0.03556;
        let log = simulate_pass(&[], &s, &cfg, 1).unwrap();
        assert_abs_diff_eq!(log.usage_l_per_ha().unwrap(), 200.0, epsilon = 0.05);
    }

    #[test]
    fn blanket_pass_one_event_per_nozzle_spanning_strip() {
        let s = strip(Treatment::Blanket, 3, 50.0);
        let log = simulate_pass(&[weed(0, 10.0, 0.3)], &s, &config(DetectorProfile::default()), 9).unwrap();
        assert_eq!(log.spray_events.len(), 6);
        for e in &log.spray_events {
            let (a, b) = e.along_interval(log.speed_mps);
            assert_abs_diff_eq!(a, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(b, 50.0, epsilon = 1e-9);
        }
        assert_eq!(coverage_hits(&[weed(0, 10.0, 0.3)], &log).sprayed, vec![0]);
        assert_abs_diff_eq!(log.usage_l_per_ha().unwrap(), 200.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_field_without_false_positives_never_sprays() {
        let s = strip(Treatment::Spot, 4, 100.0);
        let log = simulate_pass(&[], &s, &config(DetectorProfile::uniform(0.9, 0.0)), 3).unwrap();
        assert!(log.spray_events.is_empty());
        assert_eq!(log.usage_l_per_ha().unwrap(), 0.0);
        assert_eq!(log.images_with_detection, 0);
        assert!(log.images_total > 0);
    }

    #[test]
    fn single_weed_event_lead_matches_latency_displacement() {
        let s = strip(Treatment::Spot, 1, 20.0);
        let cfg = config(DetectorProfile::perfect());
        let log = simulate_pass(&[weed(7, 10.0, 0.4)], &s, &cfg, 0).unwrap();
        assert_eq!(log.spray_events.len(), 1);
        let e = log.spray_events[0];
        // first detection: first frame whose leading edge reaches the weed
        let first = log
            .detections
            .iter()
            .find(|d| d.any_predicted())
            .unwrap();
        let frame_pos = -0.4 + log.speed_mps * first.timestamp_ms / 1000.0;
        let lead_mm = (e.start_position_m - frame_pos) * 1000.0;
        assert_abs_diff_eq!(
            lead_mm,
            displacement_during(cfg.speed, 58.16).unwrap(),
            epsilon = 1e-6
        );
        let cov = coverage_hits(&[weed(7, 10.0, 0.4)], &log);
        assert_eq!(cov.sprayed, vec![7]);
    }

    #[test]
    fn weed_past_last_interval_is_missed() {
        let s = strip(Treatment::Spot, 1, 20.0);
        let log = simulate_pass(&[weed(1, 5.0, 0.4)], &s, &config(DetectorProfile::perfect()), 0).unwrap();
        let (_, end) = log.spray_events.last().unwrap().along_interval(log.speed_mps);
        let cov = coverage_hits(&[weed(1, 5.0, 0.4), weed(2, end + 2.0, 0.4)], &log);
        assert_eq!(cov.sprayed, vec![1]);
        assert_eq!(cov.missed, vec![2]);
    }

    #[test]
    fn perfect_detector_hits_every_weed() {
        let layout = layout_trial(2, 4, 1.6, 300.0, Treatment::Spot).unwrap();
        let weeds = generate_field(&FieldSpec::uniform(11, 0.2), &layout).unwrap();
        let log = simulate_pass(&weeds, &layout.strips[0], &config(DetectorProfile::perfect()), 11).unwrap();
        let cov = coverage_hits(&weeds, &log);
        assert!(cov.missed.is_empty(), "missed {:?}", cov.missed);
        assert!(!cov.sprayed.is_empty());
        assert!(log.confusion_total().is_diagonal());
    }

    #[test]
    fn spray_intervals_never_overlap_per_nozzle() {
        let layout = layout_trial(2, 4, 1.6, 200.0, Treatment::Spot).unwrap();
        let weeds = generate_field(&FieldSpec::uniform(2, 0.5), &layout).unwrap();
        let mut cfg = config(DetectorProfile::uniform(0.8, 0.01));
        cfg.latency = LatencyProfile::default();
        let log = simulate_pass(&weeds, &layout.strips[0], &cfg, 2).unwrap();
        let pass_ms = log.distance_m / log.speed_mps * 1000.0;
        for n in 0..log.geometry.nozzle_count() {
            let mut iv: Vec<_> = log
                .spray_events
                .iter()
                .filter(|e| e.nozzle_id == n)
                .map(|e| (e.start_time_ms, e.start_time_ms + e.duration_ms))
                .collect();
            iv.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in iv.windows(2) {
                assert!(w[0].1 <= w[1].0, "overlap on nozzle {n}: {w:?}");
            }
            assert!(iv.iter().map(|(a, b)| b - a).sum::<f64>() <= pass_ms);
        }
        for e in &log.spray_events {
            assert!(e.duration_ms > 0.0);
            assert_abs_diff_eq!(e.volume_l, cfg.flow_rate_lps * e.duration_ms / 1000.0, epsilon = 1e-12);
        }
        assert!(log
            .spray_events
            .windows(2)
            .all(|w| w[0].start_time_ms <= w[1].start_time_ms));
    }

    #[test]
    fn usage_is_proportional_to_sprayed_distance() {
        let layout = layout_trial(2, 4, 1.6, 200.0, Treatment::Spot).unwrap();
        let weeds = generate_field(&FieldSpec::uniform(4, 0.15), &layout).unwrap();
        let cfg = config(DetectorProfile::uniform(0.9, 0.001));
        let spot = simulate_pass(&weeds, &layout.strips[0], &cfg, 4).unwrap();
        let blanket = simulate_pass(&weeds, &layout.strips[1], &cfg, 4).unwrap();
        let ratio = spot.usage_l_per_ha().unwrap() / blanket.usage_l_per_ha().unwrap();
        let frac = spot.sprayed_distance_fraction();
        assert!(frac > 0.05 && frac < 0.95);
        assert!((ratio - frac).abs() <= 0.02 * frac);
    }

    #[test]
    fn spot_usage_monotone_in_false_positive_rate() {
        let layout = layout_trial(2, 2, 1.6, 150.0, Treatment::Spot).unwrap();
        for seed in 0..5 {
            let weeds = generate_field(&FieldSpec::uniform(seed, 0.05), &layout).unwrap();
            let mut last = 0.0;
            for fpr in [0.0, 0.001, 0.005, 0.02, 0.1] {
                let log = simulate_pass(&weeds, &layout.strips[0], &config(DetectorProfile::uniform(0.9, fpr)), seed).unwrap();
                let u = log.usage_l_per_ha().unwrap();
                assert!(u >= last - 1e-9, "seed {seed} fpr {fpr}: {u} < {last}");
                last = u;
            }
        }
    }

    #[test]
    fn spot_usage_increases_with_density_on_average() {
        let layout = layout_trial(2, 2, 1.6, 150.0, Treatment::Spot).unwrap();
        let cfg = config(DetectorProfile::uniform(0.9, 0.001));
        let mut last = -1.0;
        for intensity in [0.0, 0.05, 0.15, 0.4] {
            let mean: f64 = (0..10)
                .map(|seed| {
                    let weeds = generate_field(&FieldSpec::uniform(seed, intensity), &layout).unwrap();
                    simulate_pass(&weeds, &layout.strips[0], &cfg, seed)
                        .unwrap()
                        .usage_l_per_ha()
                        .unwrap()
                })
                .sum::<f64>()
                / 10.0;
            assert!(mean > last, "{intensity}: {mean} <= {last}");
            last = mean;
        }
    }

    #[test]
    fn blanket_usage_ignores_detector() {
        let s = strip(Treatment::Blanket, 2, 80.0);
        let layout = layout_trial(2, 2, 1.6, 80.0, Treatment::Blanket).unwrap();
        let weeds = generate_field(&FieldSpec::uniform(1, 0.3), &layout).unwrap();
        let a = simulate_pass(&weeds, &s, &config(DetectorProfile::perfect()), 1).unwrap();
        let b = simulate_pass(&weeds, &s, &config(DetectorProfile::uniform(0.2, 0.3)), 1).unwrap();
        assert_eq!(a.spray_events, b.spray_events);
        assert_eq!(a.usage_l_per_ha().unwrap().to_bits(), b.usage_l_per_ha().unwrap().to_bits());
    }

    #[test]
    fn pass_is_deterministic_for_a_seed() {
        let layout = layout_trial(2, 3, 1.6, 120.0, Treatment::Spot).unwrap();
        let weeds = generate_field(&FieldSpec::uniform(8, 0.2), &layout).unwrap();
        let mut cfg = config(DetectorProfile::uniform(0.7, 0.01).with_exposure(0.2, 0.3));
        cfg.latency = LatencyProfile::default();
        let a = simulate_trial(&weeds, &layout.strips, &cfg, 8).unwrap();
        let b = simulate_trial(&weeds, &layout.strips, &cfg, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_mismatches_are_rejected() {
        let s = strip(Treatment::Spot, 2, 50.0);
        let mut cfg = config(DetectorProfile::perfect());
        cfg.grid = TileGrid::split(1.7).unwrap();
        cfg.camera.horizontal_fov_deg = 120.0;
        assert!(matches!(simulate_pass(&[], &s, &cfg, 0), Err(crate::Error::ConfigMismatch(_))));
        let mut cfg = config(DetectorProfile::perfect());
        cfg.camera.horizontal_fov_deg = 40.0;
        assert!(matches!(simulate_pass(&[], &s, &cfg, 0), Err(crate::Error::InvalidGeometry(_))));
        let cfg = PassConfig { speed: Speed::from_kmh(0.0).unwrap(), ..config(DetectorProfile::perfect()) };
        assert!(simulate_pass(&[], &s, &cfg, 0).is_err());
    }

    #[test]
    fn swapped_tile_mapping_routes_to_the_right_nozzle() {
        use crate::geometry::TileSpan;
        let s = strip(Treatment::Spot, 1, 20.0);
        let mut cfg = config(DetectorProfile::perfect());
        cfg.grid = TileGrid::new(
            vec![
                TileSpan { cross_min: -0.8, cross_max: 0.0 },
                TileSpan { cross_min: 0.0, cross_max: 0.8 },
            ],
            vec![1, 0],
        )
        .unwrap();
        // cross 0.2 is the left tile of row 0, which drives nozzle 1
        let log = simulate_pass(&[weed(0, 10.0, 0.2)], &s, &cfg, 0).unwrap();
        assert_eq!(log.spray_events.len(), 1);
        assert_eq!(log.spray_events[0].nozzle_id, 1);
        assert_eq!(log.geometry.nozzle_span(1), (0.0, 0.8));
        assert_eq!(coverage_hits(&[weed(0, 10.0, 0.2)], &log).sprayed, vec![0]);
    }
}
