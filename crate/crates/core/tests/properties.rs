use std::collections::BTreeMap;

use cerfuse::compound::{build_prototypes, pfsa, ppa, PrototypeSample, Temperature};
use cerfuse::ingest::{align, segment_grid, MissingPolicy, SegmentRecord};
use cerfuse::metrics::{confusion, evaluate};
use cerfuse::mhpf::MhpfModel;
use cerfuse::temporal::{broadcast_and_average, TimedPrediction};
use cerfuse::{normalize, CompoundScheme, EmotionSpace, FeatureVector, ProbVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

fn space(c: usize) -> EmotionSpace {
    EmotionSpace::new((0..c).map(|i| format!("c{i}"))).unwrap()
}

fn raw_vec(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, c).prop_filter("not all zero", |v| v.iter().any(|&x| x > 0.0))
}

fn simplex(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..1.0, c).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn sum(v: &[f64]) -> f64 {
    v.iter().sum()
}

proptest! {
    #[test]
    fn normalize_lands_on_simplex(raw in raw_vec(8)) {
        let p = normalize(&raw, space(8)).unwrap();
        prop_assert!(p.values().iter().all(|&x| x >= 0.0));
        prop_assert!((sum(p.values()) - 1.0).abs() < TOL);
    }

    #[test]
    fn argmax_is_scale_invariant(raw in raw_vec(6), k in 1e-3f64..1e3) {
        let a = normalize(&raw, space(6)).unwrap();
        let scaled: Vec<f64> = raw.iter().map(|x| x * k).collect();
        let b = normalize(&scaled, space(6)).unwrap();
        prop_assert_eq!(a.argmax_index(), b.argmax_index());
    }

    #[test]
    fn grid_covers_every_instant(duration in 0.5f64..60.0, window in 1.0f64..6.0, hop_frac in 0.2f64..1.0, seed in any::<u64>()) {
        let hop = window * hop_frac;
        let segs = segment_grid(duration, window, hop).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let t: f64 = rng.random_range(0.0..duration);
            prop_assert!(segs.iter().any(|&(s, e)| s <= t && t < e), "t {} uncovered", t);
        }
        for &(s, e) in &segs {
            prop_assert!(s >= 0.0 && e <= duration + 1e-9 && e > s);
        }
    }

    #[test]
    fn fusion_is_convex_and_bounded(
        heads in 1usize..5,
        seed in any::<u64>(),
        inputs in prop::collection::vec(simplex(5), 3),
    ) {
        let sp = space(5);
        let mods: Vec<String> = (0..3).map(|m| format!("m{m}")).collect();
        let mut model = MhpfModel::zeros(heads, mods.clone(), sp.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<f64> = (0..model.param_count()).map(|_| rng.random_range(-4.0..4.0)).collect();
        model.set_params(&params);

        let pv: Vec<ProbVector> = inputs.iter().map(|v| normalize(v, sp.clone()).unwrap()).collect();
        let scores = model.fused_scores(&pv).unwrap();
        for c in 0..5 {
            let lo = pv.iter().map(|p| p.values()[c]).fold(f64::INFINITY, f64::min);
            let hi = pv.iter().map(|p| p.values()[c]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(scores[c] >= lo - TOL && scores[c] <= hi + TOL);
        }
        let fused = model.forward_ordered(&pv).unwrap();
        prop_assert!((sum(fused.values()) - 1.0).abs() < TOL);

        // Identical inputs pass through unchanged.
        let same = vec![pv[0].clone(); 3];
        let out = model.forward_ordered(&same).unwrap();
        for (a, b) in out.values().iter().zip(pv[0].values()) {
            prop_assert!((a - b).abs() < TOL);
        }

        // Effective weights form a convex combination per class.
        for c in 0..5 {
            let total: f64 = (0..3).map(|m| model.effective_weight(m, c)).sum();
            prop_assert!((total - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn ppa_raising_a_basic_keeps_its_compounds_ahead(p in simplex(8), bump in 0.01f64..1.0, which in 0usize..7) {
        let scheme = CompoundScheme::default_seven();
        let sp = scheme.source().clone();
        let base = normalize(&p, sp.clone()).unwrap();
        let mut raised = p.clone();
        raised[which] += bump;
        let raised = normalize(&raised, sp).unwrap();
        let q0 = ppa(&base, &scheme).unwrap();
        let q1 = ppa(&raised, &scheme).unwrap();
        let has = |k: usize| {
            let (a, b) = scheme.pair(k);
            a == which || b == which
        };
        let n = scheme.compound_space().len();
        for k in (0..n).filter(|&k| has(k)) {
            for j in (0..n).filter(|&j| !has(j)) {
                if q0.values()[k] >= q0.values()[j] {
                    prop_assert!(q1.values()[k] >= q1.values()[j] - TOL);
                }
            }
        }
        prop_assert!((sum(q1.values()) - 1.0).abs() < TOL);
    }

    #[test]
    fn pfsa_ignores_feature_scale(seed in any::<u64>(), k in 1e-3f64..1e3) {
        let (bank, query) = random_bank(seed);
        let t = Temperature::new(0.5).unwrap();
        let a = pfsa(&query, &bank, t).unwrap();
        let b = pfsa(&query.scaled(k), &bank, t).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn pfsa_sharpens_as_temperature_drops(seed in any::<u64>()) {
        let (bank, query) = random_bank(seed);
        let sims = bank.similarities(&query).unwrap();
        let best = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ties = sims.iter().filter(|&&s| (s - best).abs() < 1e-12).count();
        prop_assume!(ties == 1);
        let mut last = 0.0;
        for &t in &[2.0, 1.0, 0.5, 0.1, 0.02] {
            let q = pfsa(&query, &bank, Temperature::new(t).unwrap()).unwrap();
            let top = q.values().iter().cloned().fold(0.0, f64::max);
            prop_assert!(top >= last - 1e-12);
            last = top;
        }
    }

    #[test]
    fn prototypes_ignore_sample_order(seed in any::<u64>()) {
        let scheme = CompoundScheme::default_seven();
        let samples = random_samples(seed, 120, 6);
        let bank = build_prototypes(&samples, &scheme).unwrap();
        let mut shuffled = samples.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xabc));
        let other = build_prototypes(&shuffled, &scheme).unwrap();
        prop_assert_eq!(bank, other);
    }

    #[test]
    fn metrics_ignore_pair_order(seed in any::<u64>()) {
        let sp = space(5);
        let (golds, preds) = random_pairs(seed, 60, &sp);
        let a = evaluate(&confusion(&golds, &preds, &sp).unwrap()).unwrap();
        let mut idx: Vec<usize> = (0..golds.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)));
        let g2: Vec<String> = idx.iter().map(|&i| golds[i].clone()).collect();
        let p2: Vec<String> = idx.iter().map(|&i| preds[i].clone()).collect();
        let b = evaluate(&confusion(&g2, &p2, &sp).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn frames_average_covering_segments(duration in 1.0f64..30.0, fps in 1.0f64..40.0, seed in any::<u64>()) {
        let sp = space(4);
        let segs = segment_grid(duration, 4.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let preds: Vec<TimedPrediction> = segs
            .iter()
            .map(|&(s, e)| {
                let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..1.0)).collect();
                TimedPrediction { start_s: s, end_s: e, probs: normalize(&raw, sp.clone()).unwrap() }
            })
            .collect();
        let track = broadcast_and_average("v", &preds, fps, duration).unwrap();
        for f in &track.frames {
            let t = f.index as f64 / fps;
            prop_assert!(t < duration);
            let covering: Vec<&TimedPrediction> = preds.iter().filter(|p| p.start_s <= t && t < p.end_s).collect();
            prop_assert_eq!(covering.len(), f.count);
            for c in 0..4 {
                let mean = covering.iter().map(|p| p.probs.values()[c]).sum::<f64>() / covering.len() as f64;
                prop_assert!((mean - f.probs.values()[c]).abs() < TOL);
            }
        }
    }
}

fn random_samples(seed: u64, n: usize, dim: usize) -> Vec<PrototypeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            // Cycle gold so every class has correct samples.
            let gold = i % 8;
            let predicted = if rng.random_bool(0.8) { gold } else { rng.random_range(0..8) };
            let f: Vec<f64> = (0..dim).map(|d| (gold * dim + d) as f64 * 0.1 + rng.random_range(-0.5..0.5)).collect();
            PrototypeSample {
                features: FeatureVector::new(f).unwrap(),
                gold,
                predicted,
            }
        })
        .collect()
}

fn random_bank(seed: u64) -> (cerfuse::PrototypeBank, FeatureVector) {
    let scheme = CompoundScheme::default_seven();
    let bank = build_prototypes(&random_samples(seed, 80, 5), &scheme).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
    let q: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
    (bank, FeatureVector::new(q).unwrap())
}

fn random_pairs(seed: u64, n: usize, sp: &EmotionSpace) -> (Vec<String>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let g = rng.random_range(0..sp.len());
            let p = if rng.random_bool(0.5) { g } else { rng.random_range(0..sp.len()) };
            (sp.label(g).to_string(), sp.label(p).to_string())
        })
        .unzip()
}

/// Scores computed straight from the pair list, without a confusion matrix.
fn brute_force(golds: &[String], preds: &[String], sp: &EmotionSpace) -> (f64, f64) {
    let mut f1s = Vec::new();
    let mut recalls = Vec::new();
    for label in sp.labels() {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for (g, p) in golds.iter().zip(preds) {
            match (g == label, p == label) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                _ => {}
            }
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        f1s.push(f1);
        recalls.push(recall);
    }
    let k = sp.len() as f64;
    (100.0 * f1s.iter().sum::<f64>() / k, 100.0 * recalls.iter().sum::<f64>() / k)
}

#[test]
fn metrics_match_brute_force_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..200 {
        let c = rng.random_range(2..=9);
        let n = rng.random_range(1..=80);
        let sp = space(c);
        let (golds, preds) = random_pairs(rng.random(), n, &sp);
        let report = evaluate(&confusion(&golds, &preds, &sp).unwrap()).unwrap();
        let (f1, uar) = brute_force(&golds, &preds, &sp);
        assert!((report.macro_f1 - f1).abs() < 1e-9, "case {case}");
        assert!((report.uar - uar).abs() < 1e-9, "case {case}");
        assert!((report.average - (f1 + uar) / 2.0).abs() < 1e-9, "case {case}");
    }
}

#[test]
fn align_output_is_key_ordered_regardless_of_input_order() {
    let sp = space(3);
    let mut records: Vec<SegmentRecord> = Vec::new();
    for v in ["b", "a", "c"] {
        for i in 0..4u64 {
            for m in ["x", "y"] {
                records.push(SegmentRecord {
                    video_id: v.to_string(),
                    segment_index: i,
                    start_s: 2.0 * i as f64,
                    end_s: 2.0 * i as f64 + 4.0,
                    modality: m.to_string(),
                    probs: ProbVector::uniform(sp.clone()),
                    features: None,
                });
            }
        }
    }
    let reference = align(&records, None, &[], MissingPolicy::Drop, &[&sp]).unwrap();
    let keys: Vec<(String, u64)> = reference.samples.iter().map(|s| (s.video_id.clone(), s.segment_index)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        records.shuffle(&mut rng);
        let again = align(&records, None, &[], MissingPolicy::Drop, &[&sp]).unwrap();
        assert_eq!(again.samples, reference.samples);
    }
    let per_video: BTreeMap<&str, usize> = reference.samples.iter().fold(BTreeMap::new(), |mut m, s| {
        *m.entry(s.video_id.as_str()).or_default() += 1;
        m
    });
    assert!(per_video.values().all(|&n| n == 4));
}
