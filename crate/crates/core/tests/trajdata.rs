use proptest::prelude::*;
use rigidseg::synth::{generate_scene, preset_scene, Preset, PresetOptions};
use rigidseg::trajdata::*;

fn arb_trackset() -> impl Strategy<Value = TrackSet> {
    (1usize..12, 2usize..7).prop_flat_map(|(n, f)| {
        (
            prop::collection::vec((-1e4f64..1e4, -1e4f64..1e4), n * f),
            prop::collection::vec(any::<bool>(), n * f),
            prop::collection::vec(0u32..4, n),
            any::<bool>(),
        )
            .prop_map(move |(pos, vis, labels, with_labels)| {
                let mut vis = vis;
                for i in 0..n {
                    vis[i * f] = true;
                    vis[i * f + 1] = true;
                }
                let positions = pos.into_iter().map(|(x, y)| [x, y]).collect();
                let ids = (0..n as u64).map(|i| 3 * i + 1).collect();
                TrackSet::new(f, ids, positions, vis, with_labels.then_some(labels)).unwrap()
            })
    })
}

fn assert_close(a: &TrackSet, b: &TrackSet) {
    assert_eq!(a.num_points(), b.num_points());
    assert_eq!(a.num_frames(), b.num_frames());
    assert_eq!(a.ids(), b.ids());
    assert_eq!(a.labels(), b.labels());
    for i in 0..a.num_points() {
        assert_eq!(a.visibility_row(i), b.visibility_row(i));
        for f in 0..a.num_frames() {
            let (p, q) = (a.position(i, f), b.position(i, f));
            assert!((p[0] - q[0]).abs() <= 1e-7 && (p[1] - q[1]).abs() <= 1e-7);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_identity(ts in arb_trackset(), json in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let (format, name) = if json { (TrackFormat::Json, "t.json") } else { (TrackFormat::Tsv, "t.tsv") };
        let path = dir.path().join(name);
        save_trackset(&ts, &path, format).unwrap();
        let back = load_trackset(&path, format).unwrap();
        prop_assert_eq!(back.dropped, 0);
        assert_close(&ts, &back.tracks);
    }

    #[test]
    fn subsample_keeps_foreground_and_predicted_count(
        labels in prop::collection::vec(0u32..3, 1..60),
        fraction in 0.01f64..=1.0,
        seed in any::<u64>(),
    ) {
        let n = labels.len();
        let positions = (0..2 * n).map(|k| [k as f64, 1.0]).collect();
        let ts = TrackSet::new(2, (0..n as u64).collect(), positions, vec![true; 2 * n], Some(labels.clone())).unwrap();
        let background = labels.iter().filter(|l| **l == 0).count();
        let foreground = n - background;
        match subsample_background(&ts, fraction, seed) {
            Ok(out) => {
                prop_assert_eq!(out.num_points(), foreground + background_keep_count(background, fraction));
                let kept: Vec<u64> = out.ids().to_vec();
                for (i, l) in labels.iter().enumerate() {
                    if *l != 0 {
                        prop_assert!(kept.contains(&(i as u64)));
                    }
                }
                prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
            }
            Err(_) => prop_assert_eq!(foreground + background_keep_count(background, fraction), 0),
        }
    }
}

#[test]
fn outlier_screen_flags_injected_tracks() {
    let opts = PresetOptions { noise_sigma: 0.5, num_injected_outliers: 5, seed: 3, ..Default::default() };
    let scene = generate_scene(&preset_scene(Preset::General, &opts).unwrap()).unwrap();
    let report = remove_outliers(&scene.tracks, &OutlierParams::default()).unwrap();
    let flags = report.tracks.outlier_flags().unwrap();
    let caught = scene.outliers.iter().filter(|&&i| flags[i]).count();
    assert!(caught >= 4, "only {caught} of 5 injected outliers flagged");
    let false_alarms = (0..flags.len()).filter(|i| flags[*i] && !scene.outliers.contains(i)).count();
    assert!(false_alarms <= 3, "{false_alarms} clean tracks flagged");
}

#[test]
fn outlier_screen_is_quiet_on_clean_data() {
    let scene = generate_scene(&preset_scene(Preset::General, &PresetOptions::default()).unwrap()).unwrap();
    let report = remove_outliers(&scene.tracks, &OutlierParams::default()).unwrap();
    assert!(report.tracks.outlier_flags().unwrap().iter().all(|f| !f));
}

#[test]
fn outlier_flags_respect_threshold_and_ordering() {
    let opts = PresetOptions { noise_sigma: 0.5, num_injected_outliers: 4, seed: 8, ..Default::default() };
    let scene = generate_scene(&preset_scene(Preset::General, &opts).unwrap()).unwrap();
    let ts = &scene.tracks;
    let report = remove_outliers(ts, &OutlierParams::default()).unwrap();
    let flags = report.tracks.outlier_flags().unwrap().to_vec();
    let labels = ts.labels().unwrap();
    for i in 0..ts.num_points() {
        if let (Some(s), Some(Some(t))) = (report.scores[i], report.thresholds.get(&labels[i])) {
            assert_eq!(flags[i], s > *t);
        }
    }

    let n = ts.num_points();
    let perm: Vec<usize> = (0..n).rev().collect();
    let shuffled = ts.select(&perm);
    let flags2 = remove_outliers(&shuffled, &OutlierParams::default()).unwrap().tracks.outlier_flags().unwrap().to_vec();
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(flags2[k], flags[i], "point {i}");
    }
}
