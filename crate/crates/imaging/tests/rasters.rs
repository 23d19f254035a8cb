use proptest::prelude::*;
use specvit_imaging::{
    compose_multimodal, intensity_strip, render_lineplot, render_multimodal, CwtPlan, MorletConfig,
    IMAGE_SIZE, STRIP_ROWS,
};

fn ramp(len: usize) -> Vec<f64> {
    (0..len).map(|i| i as f64 / (len - 1) as f64).collect()
}

#[test]
fn composed_image_layout() {
    let v: Vec<f64> = (0..80).map(|t| 0.5 + 0.5 * (t as f64 * 0.4).sin()).collect();
    let plan = CwtPlan::new(MorletConfig::for_length(80), 80).unwrap();
    let img = render_multimodal(&v, &plan).unwrap();
    assert_eq!((img.width, img.height, img.pixels.len()), (128, 128, 128 * 128));
    for r in 1..STRIP_ROWS {
        assert_eq!(img.row(r), img.row(0));
    }
    let spec_max = img.pixels[STRIP_ROWS * IMAGE_SIZE..].iter().max().unwrap();
    assert_eq!(*spec_max, 255);
}

#[test]
fn constant_window_has_blank_spectrogram() {
    let plan = CwtPlan::new(MorletConfig::for_length(40), 40).unwrap();
    let img = render_multimodal(&vec![0.5; 40], &plan).unwrap();
    assert!(img.pixels[..STRIP_ROWS * IMAGE_SIZE].iter().all(|&p| p == 128));
    assert!(img.pixels[STRIP_ROWS * IMAGE_SIZE..].iter().all(|&p| p == 0));
}

#[test]
fn mismatched_lengths_rejected() {
    let spec = specvit_imaging::cwt(&[0.0; 10], &MorletConfig::for_length(10)).unwrap();
    assert!(compose_multimodal(&[0; 9], &spec).is_err());
}

#[test]
fn lineplot_constant_is_one_band() {
    let img = render_lineplot(&[0.5; 30]);
    let dark_rows: Vec<usize> = (0..128).filter(|&r| img.row(r).iter().any(|&p| p == 0)).collect();
    assert!(dark_rows.len() <= 2 && !dark_rows.is_empty());
    let mid = dark_rows[0];
    assert!((62..=66).contains(&mid));
    for r in &dark_rows {
        assert!(img.row(*r).iter().all(|&p| p == 0));
    }
    assert!(img.pixels.iter().all(|&p| p == 0 || p == 255));
}

#[test]
fn lineplot_ramp_climbs() {
    let img = render_lineplot(&ramp(50));
    let mut prev_top = usize::MAX;
    let mut prev_bottom = usize::MAX;
    for c in 0..128 {
        let dark: Vec<usize> = (0..128).filter(|&r| img.get(r, c) == 0).collect();
        assert!(!dark.is_empty(), "column {c} is empty");
        let (top, bottom) = (dark[0], *dark.last().unwrap());
        assert!(top <= prev_top && bottom <= prev_bottom, "column {c}");
        prev_top = top;
        prev_bottom = bottom;
    }
    assert_eq!(img.get(123, 0), 0);
    assert_eq!(img.get(4, 127), 0);
}

#[test]
fn lineplot_is_deterministic() {
    let v: Vec<f64> = (0..77).map(|t| ((t * 37 % 11) as f64) / 10.0).collect();
    assert_eq!(render_lineplot(&v), render_lineplot(&v));
}

#[test]
fn png_round_trip_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("syn_lineplot.png");
    render_lineplot(&ramp(20)).save_png(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[1..4], b"PNG");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composition_shape_for_any_length(len in 10usize..=512, seed in 0u64..1000) {
        let v: Vec<f64> = (0..len)
            .map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 999.0)
            .collect();
        let plan = CwtPlan::new(MorletConfig::for_length(len), len).unwrap();
        let img = render_multimodal(&v, &plan).unwrap();
        prop_assert_eq!(img.pixels.len(), IMAGE_SIZE * IMAGE_SIZE);
        let spec_max = *img.pixels[STRIP_ROWS * IMAGE_SIZE..].iter().max().unwrap();
        prop_assert_eq!(spec_max, 255);
    }

    #[test]
    fn strip_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let s = intensity_strip(&[a, b]).unwrap();
        if a < b { prop_assert!(s[0] <= s[1]); }
    }

    #[test]
    fn lineplot_stays_in_bounds(v in proptest::collection::vec(0.0f64..=1.0, 1..300)) {
        let img = render_lineplot(&v);
        prop_assert_eq!(img.pixels.len(), IMAGE_SIZE * IMAGE_SIZE);
        prop_assert!(img.pixels.iter().any(|&p| p == 0));
    }
}
