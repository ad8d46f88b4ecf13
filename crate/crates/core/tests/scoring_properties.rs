use gwevo_core::datagen::InjectionRecord;
use gwevo_core::pipelines::DetectionCatalog;
use gwevo_core::scoring::*;
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 200, ..ProptestConfig::default() }
}

const DURATION: f64 = 7200.0;

fn catalog(rows: &[(f64, f64, f64)]) -> DetectionCatalog {
    DetectionCatalog {
        times: rows.iter().map(|r| r.0).collect(),
        stats: rows.iter().map(|r| r.1).collect(),
        vars: rows.iter().map(|r| r.2).collect(),
    }
}

/// Background of `n` triggers plus a foreground holding, for each injection,
/// either a trigger near it or nothing.
fn scenario() -> impl Strategy<Value = (DetectionCatalog, DetectionCatalog, Vec<InjectionRecord>)> {
    (
        prop::collection::vec(0.5f64..50.0, 1..40),
        prop::collection::vec((prop::option::of(0.5f64..80.0), -0.3f64..0.3, 0.01f64..1.0), 1..20),
    )
        .prop_map(|(bg, fg)| {
            let background = catalog(&bg.iter().enumerate().map(|(i, &s)| (i as f64 * 10.0, s, 1.0)).collect::<Vec<_>>());
            let truth: Vec<InjectionRecord> = (0..fg.len())
                .map(|i| InjectionRecord { t_coal: 100.0 + 50.0 * i as f64, distance: 100.0, chirp_mass: 10.0, snr_opt: 10.0 })
                .collect();
            let rows: Vec<(f64, f64, f64)> = fg
                .iter()
                .zip(&truth)
                .filter_map(|(&(s, dt, var), inj)| s.map(|s| (inj.t_coal + dt, s, var)))
                .collect();
            (background, catalog(&rows), truth)
        })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn far_and_detection_fall_with_threshold(
        (bg, fg, truth) in scenario(),
        mut th in prop::collection::vec(0f64..100.0, 2..30),
    ) {
        th.sort_by(f64::total_cmp);
        let far = far_curve(&bg, DURATION, &th).unwrap();
        let d = sensitivity_curve(&match_events(&fg, &truth), 1000.0, &th).unwrap();
        for i in 1..th.len() {
            prop_assert!(far[i] <= far[i - 1]);
            prop_assert!(d[i] <= d[i - 1]);
        }
    }

    #[test]
    fn auc_ignores_monotone_transforms(
        (bg, fg, truth) in scenario(),
        kind in 0usize..3,
        a in 0.1f64..10.0,
        b in -5f64..5.0,
    ) {
        let f = |s: f64| match kind {
            0 => a * s + b,
            1 => (s / 10.0).exp(),
            _ => s.powi(3) + b,
        };
        let base = auc_fitness(&bg, &fg, &truth, DURATION, 1000.0, FarRange::default()).unwrap();
        let moved = auc_fitness(&bg.map_stats(f), &fg.map_stats(f), &truth, DURATION, 1000.0, FarRange::default()).unwrap();
        prop_assert!(base.auc >= 0.0);
        prop_assert!((base.auc - moved.auc).abs() <= 1e-9 * base.auc.max(1.0), "{} vs {}", base.auc, moved.auc);
        prop_assert_eq!(base.degenerate, moved.degenerate);
    }

    #[test]
    fn auc_scales_with_d_max((bg, fg, truth) in scenario(), k in 0.01f64..100.0) {
        let one = auc_fitness(&bg, &fg, &truth, DURATION, 1000.0, FarRange::default()).unwrap();
        let scaled = auc_fitness(&bg, &fg, &truth, DURATION, 1000.0 * k, FarRange::default()).unwrap();
        prop_assert!((scaled.auc - k * one.auc).abs() <= 1e-9 * (k * one.auc).max(1e-12));
    }

    #[test]
    fn catalog_csv_round_trips(rows in prop::collection::vec((any::<f64>(), any::<f64>(), 1e-300f64..1e300), 0..50)) {
        let rows: Vec<_> = rows.into_iter().filter(|r| r.0.is_finite() && r.1.is_finite()).collect();
        let c = catalog(&rows);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = DetectionCatalog::read_csv(buf.as_slice(), "mem").unwrap();
        prop_assert_eq!(back, c);
    }
}
