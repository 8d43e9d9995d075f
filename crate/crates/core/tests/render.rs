use dsd_core::data::synth::SyntheticWriterStyle;
use dsd_core::data::{synth::synth_sample, StrokePoint, StrokeSequence};
use dsd_core::render::{parse_svg_paths, render_grid, render_svg, RenderSpec, PALETTE};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn seq(points: &[(f64, f64, bool)]) -> StrokeSequence {
    let pts = points.iter().map(|&(x, y, e)| StrokePoint::new(x, y, e)).collect();
    StrokeSequence::new("w", "x", pts, None).unwrap()
}

fn path_count(svg: &str) -> usize {
    svg.matches("<path").count()
}

/// Independent oracle: running sums split after each pen lift.
fn oracle_strokes(points: &[StrokePoint], origin: [f64; 2]) -> Vec<Vec<[f64; 2]>> {
    let mut xs = vec![origin[0]];
    let mut ys = vec![origin[1]];
    for p in points {
        xs.push(xs.last().unwrap() + p.dx);
        ys.push(ys.last().unwrap() + p.dy);
    }
    let mut out = Vec::new();
    let mut start = 0;
    for (i, p) in points.iter().enumerate() {
        if p.eos {
            out.push((start..=i + 1).map(|k| [xs[k], ys[k]]).collect());
            start = i + 2;
        }
    }
    if start < xs.len() {
        out.push((start..xs.len()).map(|k| [xs[k], ys[k]]).collect());
    }
    out
}

#[test]
fn two_strokes_give_two_paths() {
    let x = seq(&[(1.0, 0.0, false), (1.0, 1.0, true), (3.0, 0.0, false), (0.0, 2.0, true)]);
    let svg = render_svg(&x, &RenderSpec::default()).unwrap();
    assert_eq!(path_count(&svg), 2);
    assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"750\" height=\"120\""));
    assert!(svg.contains(r#"d="M10 80 L11 80 L12 81""#));
}

#[test]
fn lone_point_is_a_dot() {
    let x = seq(&[(1.0, 0.0, true), (5.0, 5.0, true)]);
    let svg = render_svg(&x, &RenderSpec::default()).unwrap();
    assert_eq!(path_count(&svg), 2);
    assert!(svg.contains(r#"d="M16 85 Z""#), "{svg}");
    assert!(svg.contains(r#"stroke-linecap="round""#));
}

#[test]
fn output_is_byte_identical_across_calls() {
    let style = SyntheticWriterStyle::random("w", &mut ChaCha8Rng::seed_from_u64(3));
    let x = synth_sample(&style, "hello there", &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let spec = RenderSpec {
        color_by_char: true,
        ..RenderSpec::default()
    };
    assert_eq!(render_svg(&x, &spec).unwrap(), render_svg(&x, &spec).unwrap());
}

#[test]
fn coloring_splits_cursive_ink_at_character_boundaries() {
    let mut style = SyntheticWriterStyle::plain("w");
    style.cursive = true;
    style.scale = 20.0;
    let x = synth_sample(&style, "nu", &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let plain = render_svg(&x, &RenderSpec::default()).unwrap();
    let spec = RenderSpec {
        color_by_char: true,
        ..RenderSpec::default()
    };
    let colored = render_svg(&x, &spec).unwrap();
    // 'n' is one stroke joined to the first stroke of 'u'; 'u' has two.
    assert_eq!(path_count(&plain), 2);
    assert_eq!(path_count(&colored), 3);
    let colors: Vec<&str> = colored
        .lines()
        .filter_map(|l| l.split("stroke=\"").nth(1).map(|r| &r[..7]))
        .collect();
    assert_eq!(colors, vec![PALETTE[0], PALETTE[1], PALETTE[1]]);
    // The split piece restarts at the boundary point.
    let paths = parse_svg_paths(&colored).unwrap();
    assert_eq!(paths[0].last(), paths[1].first());
    assert!(!plain.contains(PALETTE[0]));
}

#[test]
fn grid_stacks_rows() {
    let x = seq(&[(1.0, 0.0, false), (1.0, 1.0, true)]);
    let svg = render_grid(&[x.clone(), x], &RenderSpec::default()).unwrap();
    assert!(svg.contains(r#"height="240""#));
    let paths = parse_svg_paths(&svg).unwrap();
    assert_eq!(paths[0][0], [10.0, 80.0]);
    assert_eq!(paths[1][0], [10.0, 200.0]);
    assert!(render_grid(&[], &RenderSpec::default()).is_err());
}

#[test]
fn rejects_bad_specs() {
    let x = seq(&[(1.0, 0.0, true)]);
    for spec in [
        RenderSpec { width: 0.0, ..RenderSpec::default() },
        RenderSpec { height: -1.0, ..RenderSpec::default() },
        RenderSpec { baseline: 130.0, ..RenderSpec::default() },
        RenderSpec { stroke_width: 0.0, ..RenderSpec::default() },
        RenderSpec { margin: f64::NAN, ..RenderSpec::default() },
    ] {
        assert!(render_svg(&x, &spec).is_err(), "{spec:?}");
    }
}

fn arb_points() -> impl Strategy<Value = Vec<StrokePoint>> {
    prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64, prop::bool::weighted(0.2)), 1..60)
        .prop_map(|v| v.into_iter().map(|(x, y, e)| StrokePoint::new(x, y, e)).collect())
}

proptest! {
    #[test]
    fn paths_round_trip_through_delta_decoding(points in arb_points(), margin in 0.0..100.0f64, baseline in 0.0..120.0f64) {
        let x = StrokeSequence::new("w", "x", points.clone(), None).unwrap();
        let spec = RenderSpec { margin, baseline, ..RenderSpec::default() };
        let parsed = parse_svg_paths(&render_svg(&x, &spec).unwrap()).unwrap();
        let expected = oracle_strokes(&points, [margin, baseline]);
        prop_assert_eq!(parsed.len(), expected.len());
        for (a, b) in parsed.iter().zip(&expected) {
            prop_assert_eq!(a.len(), b.len());
            for (p, q) in a.iter().zip(b) {
                prop_assert!((p[0] - q[0]).abs() <= 1e-9 && (p[1] - q[1]).abs() <= 1e-9);
            }
        }
    }
}
