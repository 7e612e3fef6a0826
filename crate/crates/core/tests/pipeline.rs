use pami_core::eval::{insertion, pointing_game, GroundTruthRegion};
use pami_core::scorer::{BlobScorer, ConstantScorer, KeywordScorer};
use pami_core::segment::sweep_configs;
use pami_core::text::{explain_tokens, partition_tokens};
use pami_core::window::window_centers;
use pami_core::{Engine, ExplainOptions, Image, MaskStyle, SegmentOptions, Strategy, WindowConfig, WindowShape};

/// Gray gradient with a red square at (x0, y0).
fn scene(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> Image {
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            if (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y) {
                data.extend_from_slice(&[1.0, 0.0, 0.0]);
            } else {
                let g = 0.3 + 0.4 * (x + y) as f64 / (w + h) as f64;
                data.extend_from_slice(&[g, g, g]);
            }
        }
    }
    Image::new(w, h, 3, data).unwrap()
}

#[test]
fn window_explanation_points_at_the_blob() {
    let img = scene(24, 20, 13, 9, 5);
    let scorer = BlobScorer::new([1.0, 0.0, 0.0], BlobScorer::DEFAULT_TOLERANCE).unwrap().calibrated(&img);
    let cfg = WindowConfig::new(WindowShape::Rectangle, 3, 2).unwrap();
    assert!(cfg.covers_all());
    let opts = ExplainOptions {
        strategy: Strategy::Window(cfg),
        class: None,
        mask: MaskStyle::default(),
    };
    let ex = Engine::new(&scorer).explain(&img, &opts).unwrap();
    assert_eq!(ex.class, 0);
    assert_eq!(ex.scorer_calls, window_centers(24, 20, 2).len() as u64);
    assert!(ex.map.values().iter().all(|v| (0.0..=1.0).contains(v)));
    let gt = GroundTruthRegion::bbox(0, 13, 9, 17, 13).unwrap();
    assert!(pointing_game(&ex.map, &gt).unwrap().is_hit());
}

#[test]
fn segment_explanation_of_constant_scorer_is_flat() {
    let img = scene(32, 32, 4, 20, 8);
    let scorer = ConstantScorer::new(0.25, 3).unwrap();
    let opts = ExplainOptions {
        strategy: Strategy::Segment(SegmentOptions {
            configs: sweep_configs(false),
            runs: 2,
        }),
        class: Some(2),
        mask: MaskStyle::default(),
    };
    let ex = Engine::new(&scorer).explain(&img, &opts).unwrap();
    assert!(ex.map.values().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    // a flat first run leaves nothing to segment
    assert_eq!(ex.runs.len(), 1);
    assert!(!ex.warnings.is_empty());
    let parts: usize = ex.runs[0].segment_counts.iter().flatten().sum();
    assert_eq!(ex.scorer_calls, parts as u64);
}

#[test]
fn blob_map_beats_its_reverse_on_insertion() {
    let img = scene(20, 20, 3, 3, 6);
    let scorer = BlobScorer::new([1.0, 0.0, 0.0], BlobScorer::DEFAULT_TOLERANCE).unwrap().calibrated(&img);
    let cfg = WindowConfig::new(WindowShape::Circle, 4, 2).unwrap();
    let opts = ExplainOptions {
        strategy: Strategy::Window(cfg),
        class: Some(0),
        mask: MaskStyle::default(),
    };
    let map = Engine::new(&scorer).explain(&img, &opts).unwrap().map;
    let reversed = pami_core::ImportanceMap::new(20, 20, map.values().iter().map(|v| 1.0 - v).collect()).unwrap();
    let good = insertion(&img, &map, &scorer, 0, 20, &MaskStyle::default()).unwrap();
    let bad = insertion(&img, &reversed, &scorer, 0, 20, &MaskStyle::default()).unwrap();
    assert!(good.auc > bad.auc, "{} vs {}", good.auc, bad.auc);
    assert!((0.0..=1.0).contains(&good.auc));
}

#[test]
fn keyword_text_explanation() {
    let seq = partition_tokens("what a lovely love song").unwrap();
    let kw = KeywordScorer::new("love", 0.8, 0.2).unwrap();
    // whole-token match: "lovely" does not count
    assert_eq!(explain_tokens(&seq, &kw, 0).unwrap(), [0.2, 0.2, 0.2, 0.8, 0.2]);
    assert!(explain_tokens(&seq, &kw, 1).is_err());
}
