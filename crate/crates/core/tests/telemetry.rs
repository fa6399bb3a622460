use std::collections::HashMap;

use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use ssdkg_core::telemetry::stats::{self, ChangePointParams};
use ssdkg_core::telemetry::{
    detect_episodes, emit_frames, impute_gaps, load_telemetry, DriveSeries, EpisodeKind, Ideal, Obs, RuleRepository,
    Window,
};

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 3, 1).unwrap()
}

/// Pair-count S and the tie-corrected variance from explicit tie groups.
fn mk_oracle(x: &[f64]) -> (i64, f64, f64) {
    let n = x.len();
    let mut s = 0i64;
    for j in 0..n {
        for i in 0..j {
            if x[j] > x[i] {
                s += 1;
            } else if x[j] < x[i] {
                s -= 1;
            }
        }
    }
    let mut groups: HashMap<u64, f64> = HashMap::new();
    for v in x {
        *groups.entry(v.to_bits()).or_default() += 1.0;
    }
    let nf = n as f64;
    let tie: f64 = groups.values().map(|t| t * (t - 1.0) * (2.0 * t + 5.0)).sum();
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie) / 18.0;
    let p = if var == 0.0 {
        1.0
    } else {
        let z = if s > 0 { (s - 1) as f64 } else if s < 0 { (s + 1) as f64 } else { 0.0 } / var.sqrt();
        let norm = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        2.0 * (1.0 - statrs::distribution::ContinuousCDF::cdf(&norm, z.abs()))
    };
    (s, var, p)
}

fn series_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        prop::collection::vec((0i32..6).prop_map(f64::from), 2..=60),
        prop::collection::vec(-1e3f64..1e3, 2..=60),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn mann_kendall_matches_pair_count_oracle(x in series_strategy()) {
        let got = stats::mann_kendall(&x).unwrap();
        let (s, var, p) = mk_oracle(&x);
        prop_assert_eq!(got.s, s);
        prop_assert_eq!(got.variance, var);
        prop_assert!((got.p - p).abs() < 1e-9, "p {} vs {}", got.p, p);
        let mut rev = x.clone();
        rev.reverse();
        prop_assert_eq!(stats::mann_kendall(&rev).unwrap().s, -s);
    }

    #[test]
    fn strictly_increasing_gives_max_s(start in -100.0f64..100.0, steps in prop::collection::vec(0.01f64..10.0, 1..60)) {
        let mut x = vec![start];
        for s in &steps {
            x.push(x.last().unwrap() + s);
        }
        let n = x.len() as i64;
        prop_assert_eq!(stats::mann_kendall(&x).unwrap().s, n * (n - 1) / 2);
    }

    #[test]
    fn level_summaries_ignore_order(mut x in prop::collection::vec(-1e6f64..1e6, 1..50), seed in any::<u64>()) {
        let before = (stats::median(&x), stats::quantile(&x, 0.95), stats::mad(&x));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..x.len()).rev() {
            x.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(before, (stats::median(&x), stats::quantile(&x, 0.95), stats::mad(&x)));
        prop_assert!(before.1.unwrap() >= before.0.unwrap());
    }

    /// Noise-free piecewise-constant input: the detected set is exactly the true steps.
    #[test]
    fn change_points_recover_noise_free_steps(
        segs in prop::collection::vec((3usize..9, -50i32..50), 1..5)
    ) {
        let mut x = Vec::new();
        let mut truth = Vec::new();
        let mut prev: Option<i32> = None;
        for (len, level) in &segs {
            let level = if prev == Some(*level) { level + 1 } else { *level };
            if prev.is_some() {
                truth.push(x.len());
            }
            x.extend(std::iter::repeat_n(level as f64, *len));
            prev = Some(level);
        }
        prop_assert_eq!(stats::change_points(&x, &ChangePointParams::default()), truth);
    }

    /// The first split of binary segmentation is the exhaustive single-split optimum.
    #[test]
    fn single_change_point_is_brute_force_optimum(x in prop::collection::vec(-10.0f64..10.0, 6..30)) {
        let p = ChangePointParams::default();
        let got = stats::change_points(&x, &p);
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|y| (y - m).powi(2)).sum::<f64>()
        };
        if got.len() == 1 {
            let best = (p.min_segment..=x.len() - p.min_segment)
                .min_by(|&a, &b| (sse(&x[..a]) + sse(&x[a..])).total_cmp(&(sse(&x[..b]) + sse(&x[b..]))))
                .unwrap();
            let cost = |k: usize| sse(&x[..k]) + sse(&x[k..]);
            prop_assert!((cost(got[0]) - cost(best)).abs() < 1e-9);
        }
        for w in got.windows(2) {
            prop_assert!(w[1] - w[0] >= p.min_segment);
        }
        prop_assert!(got.iter().all(|&k| k >= p.min_segment && k <= x.len() - p.min_segment));
    }

    #[test]
    fn frame_invariants(seed in any::<u64>(), len in 5usize..40) {
        let rules = RuleRepository::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = DriveSeries::new("d/1", "M", day0(), len);
        for attr in ["r_5", "r_187", "r_194", "r_241"] {
            let mut level = 0.0f64;
            for d in 0..len {
                level += rng.random_range(0.0..3.0);
                if rng.random_bool(0.75) {
                    s.set(attr, d, level.round());
                }
            }
        }
        let s = impute_gaps(&s, &rules);
        let w = Window::starting(day0(), len);
        let fs = emit_frames(&s, &w, &rules).unwrap();
        for f in &fs.attributes {
            let q = f.quality;
            prop_assert_eq!(q.observed + q.imputed + q.missing, len);
            prop_assert!((q.coverage - q.observed as f64 / len as f64).abs() < 1e-12);
            prop_assert!(f.summary.p95 >= f.summary.median);
            prop_assert!(f.temporal.change_points.iter().all(|d| *d < len));
            prop_assert!(f.temporal.exposure.iter().all(|e| e.days <= q.observed));
        }
        let again = emit_frames(&s, &w, &rules).unwrap();
        prop_assert_eq!(fs.frame_ids(), again.frame_ids());
    }
}

#[test]
fn planted_step_localizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let trials = 200;
    let mut hits = 0;
    for _ in 0..trials {
        let at = rng.random_range(5..25);
        let x: Vec<f64> = (0..30).map(|d| noise.sample(&mut rng) + if d >= at { 3.0 } else { 0.0 }).collect();
        let cps = stats::change_points(&x, &ChangePointParams::default());
        if cps.iter().any(|c| c.abs_diff(at) <= 1) {
            hits += 1;
        }
    }
    assert!(hits as f64 / trials as f64 >= 0.95, "{hits}/{trials}");
}

#[test]
fn mann_kendall_fixed_cases() {
    assert_eq!(stats::mann_kendall(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap().s, 10);
    let flat = stats::mann_kendall(&[5.0; 4]).unwrap();
    assert_eq!((flat.s, flat.p), (0, 1.0));
    assert!(stats::mann_kendall(&[]).is_err());
}

fn csv_30_days(drive: &str) -> String {
    let mut out = String::from("disk_id,ds,model,r_187,r_5,r_241,read_share,avg_queue_depth,io_count,workload_tag\n");
    for d in 0..30 {
        let date = day0() + chrono::Duration::days(d);
        out += &format!(
            "{drive},{},MC1,{},{},{},{},{},{},WSM\n",
            date.format("%Y-%m-%d"),
            if d >= 20 { d - 19 } else { 0 },
            d / 3,
            1_000_000 + d * 5000,
            0.6,
            4 + d % 3,
            1000 + (d % 5) * 100
        );
    }
    out
}

#[test]
fn full_window_frame_listing() {
    let rules = RuleRepository::builtin();
    let set = load_telemetry(csv_30_days("Disk/26871").as_bytes(), &rules).unwrap();
    let s = &set.series["Disk/26871"];
    assert_eq!(s.days, 30);
    let w = Window::starting(day0(), 30);
    let fs = emit_frames(s, &w, &rules).unwrap();
    let f = fs.attribute("r_187").unwrap();
    assert_eq!((f.quality.observed, f.quality.window_days), (30, 30));
    assert_eq!(f.ideal, Ideal::Low);
    assert!(f.temporal.mann_kendall.unwrap().p < 0.05);
    assert_eq!(f.temporal.exposure[0].days, 10);
    let wl = fs.workload.as_ref().unwrap();
    assert_eq!(wl.read_share, Some(0.6));
    assert_eq!(wl.category.as_deref(), Some("WSM"));
    let io: Vec<f64> = (0..30).map(|d| 1000.0 + (d % 5) as f64 * 100.0).collect();
    let mean = io.iter().sum::<f64>() / 30.0;
    let sd = (io.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 30.0).sqrt();
    approx::assert_relative_eq!(wl.burstiness.unwrap(), sd / mean, max_relative = 1e-12);
    assert!(fs.env.is_none());
    assert_eq!(fs.quality.coverage["smart"], 1.0);
    assert_eq!(fs.attribute("r_187").unwrap().frame_id, emit_frames(s, &w, &rules).unwrap().attribute("r_187").unwrap().frame_id);
}

#[test]
fn five_of_seven_with_one_imputed() {
    let rules = RuleRepository::builtin();
    let mut s = DriveSeries::new("d", "M", day0(), 7);
    for (d, v) in [(0, 1.0), (1, 1.0), (3, 2.0), (4, 2.0), (5, 3.0)] {
        s.set("r_187", d, v);
    }
    let s = impute_gaps(&s, &rules);
    let fs = emit_frames(&s, &Window::starting(day0(), 7), &rules).unwrap();
    let q = fs.quality.attributes["r_187"];
    assert_eq!((q.observed, q.imputed, q.missing), (5, 1, 1));
    assert_eq!(fs.quality.imputed_values, 1);
    assert_eq!(fs.quality.missing_days, 1);
    assert_eq!(s.columns["r_187"].values[2], Some(1.5));
}

#[test]
fn long_gap_stays_missing() {
    let rules = RuleRepository::builtin();
    let mut s = DriveSeries::new("d", "M", day0(), 10);
    for d in [0, 1, 7, 8, 9] {
        s.set("r_5", d, d as f64);
    }
    let s = impute_gaps(&s, &rules);
    let fs = emit_frames(&s, &Window::starting(day0(), 10), &rules).unwrap();
    let f = fs.attribute("r_5").unwrap();
    assert_eq!((f.quality.imputed, f.quality.missing), (0, 5));
    assert_eq!(f.quality.coverage, 0.5);
}

#[test]
fn regime_shift_at_day_four() {
    let rules = RuleRepository::builtin();
    let mut s = DriveSeries::new("d", "M", day0(), 7);
    for (d, v) in [1.0, 1.0, 1.0, 1.0, 6.0, 6.0, 6.0].into_iter().enumerate() {
        s.set("r_187", d, v);
    }
    let fs = emit_frames(&s, &Window::starting(day0(), 7), &rules).unwrap();
    let f = fs.attribute("r_187").unwrap();
    assert_eq!(f.temporal.change_points, vec![4]);
    let eps = detect_episodes(&fs, &rules);
    assert_eq!(eps.len(), 1);
    assert_eq!(eps[0].kind, EpisodeKind::RegimeShift);
    assert_eq!((eps[0].start_day, eps[0].pre_level, eps[0].post_level), (4, Some(1.0), Some(6.0)));
    assert_eq!(eps[0].triggers, vec![f.frame_id.clone()]);
}

#[test]
fn quiet_series_has_no_episodes() {
    let rules = RuleRepository::builtin();
    let mut s = DriveSeries::new("d", "M", day0(), 14);
    for d in 0..14 {
        s.set("r_187", d, 0.0);
        s.set("temp_c", d, 35.0 + (d % 2) as f64);
    }
    let fs = emit_frames(&s, &Window::starting(day0(), 14), &rules).unwrap();
    assert!(detect_episodes(&fs, &rules).is_empty());
}

#[test]
fn temperature_excursion_co_moves_with_errors() {
    let rules = RuleRepository::builtin();
    let temps = [38.0, 39.0, 38.0, 47.0, 49.0, 48.0, 39.0, 38.0, 46.0, 38.0];
    let errs = [0.0, 0.0, 0.0, 3.0, 5.0, 4.0, 0.0, 1.0, 3.0, 0.0];
    let mut s = DriveSeries::new("d", "M", day0(), 10);
    for d in 0..10 {
        s.set("temp_c", d, temps[d]);
        s.set("r_199", d, errs[d]);
    }
    let fs = emit_frames(&s, &Window::starting(day0(), 10), &rules).unwrap();
    let env = fs.env.as_ref().unwrap();
    let t = &env.factors["temperature"];
    assert_eq!(t.unit, "°C");
    assert_eq!(t.excursions.len(), 2);
    assert_eq!((t.excursions[0].start, t.excursions[0].end, t.excursions[0].peak), (3, 5, 49.0));
    let eps: Vec<_> = detect_episodes(&fs, &rules)
        .into_iter()
        .filter(|e| e.kind == EpisodeKind::CrossSourceAssociation)
        .collect();
    assert_eq!(eps.len(), 1);
    // Pearson by the textbook definition.
    let (mt, me) = (temps.iter().sum::<f64>() / 10.0, errs.iter().sum::<f64>() / 10.0);
    let cov: f64 = temps.iter().zip(&errs).map(|(a, b)| (a - mt) * (b - me)).sum();
    let r = cov
        / (temps.iter().map(|a| (a - mt).powi(2)).sum::<f64>().sqrt()
            * errs.iter().map(|b| (b - me).powi(2)).sum::<f64>().sqrt());
    assert!(r >= 0.7);
    approx::assert_relative_eq!(eps[0].correlation.unwrap(), r, max_relative = 1e-12);
    assert_eq!(eps[0].triggers, vec![fs.attribute("r_199").unwrap().frame_id.clone(), env.frame_id.clone()]);
}

#[test]
fn dead_attribute_is_noted_not_framed() {
    let rules = RuleRepository::builtin();
    let csv = "disk_id,ds,model,r_5,r_187\nd,2024-03-01,M,1,\nd,2024-03-02,M,1,\n";
    let set = load_telemetry(csv.as_bytes(), &rules).unwrap();
    let fs = emit_frames(&set.series["d"], &Window::starting(day0(), 2), &rules).unwrap();
    assert!(fs.attribute("r_187").is_none());
    assert!(fs.quality.notes.iter().any(|n| n.starts_with("r_187: no observations")));
    assert_eq!(fs.quality.attributes["r_187"].missing, 2);
}

#[test]
fn humidity_out_of_range_is_a_sensor_flag() {
    let rules = RuleRepository::builtin();
    let csv = "disk_id,ds,model,rh_pct\nd,2024-03-01,M,40\nd,2024-03-02,M,140\n";
    let set = load_telemetry(csv.as_bytes(), &rules).unwrap();
    let s = &set.series["d"];
    assert_eq!(s.columns["rh_pct"].status[1], Obs::Missing);
    let fs = emit_frames(s, &Window::starting(day0(), 2), &rules).unwrap();
    assert_eq!(fs.quality.sensor_flags, vec!["day 1: sensor-check:rh_pct".to_string()]);
    assert!(fs.env.unwrap().factors["humidity"].max <= 100.0);
}
