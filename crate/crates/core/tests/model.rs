use dsd_core::data::synth::{synth_sample, SyntheticWriterStyle};
use dsd_core::data::{StrokePoint, StrokeSequence};
use dsd_core::model::{
    mat_vec, mat_vec_graph, mdn_losses, mean_writer_dsd, reconstruct_alpha, DecodeOptions, DsdConfig, DsdModel,
    MdnStep, ParamGroup, Targets,
};
use dsd_core::numeric::{grad_check_store, mat_inverse, Bound, Graph, ParamId, Tensor, Var};
use dsd_core::DsdError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(seed: u64) -> DsdModel {
    DsdModel::new(DsdConfig::small(8, 3), seed).unwrap()
}

fn sample(text: &str, seed: u64) -> StrokeSequence {
    let style = SyntheticWriterStyle::plain("w0");
    let mut s = synth_sample(&style, text, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    // keep sequences short for finite differences
    for p in &mut s.points {
        p.dx /= 10.0;
        p.dy /= 10.0;
    }
    s
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn parameter_counts_follow_shapes() {
    let c = DsdConfig::default();
    let counts = c.param_counts();
    assert_eq!(counts.g_fc2, 16_842_752);
    assert_eq!(counts.g_fc2, 256 * 65_536 + 65_536);
    let total = counts.total();
    assert!((31_000_000..=31_700_000).contains(&total), "{total}");
    for (l, k) in [(8, 3), (16, 5), (32, 5)] {
        let m = DsdModel::new(DsdConfig::small(l, k), 0).unwrap();
        assert_eq!(m.num_params(), m.config.param_counts().total());
    }
}

#[test]
fn encode_strokes_one_dsd_per_prefix() {
    let m = tiny(1);
    let x = sample("his", 0);
    let w = m.encode_strokes(&x).unwrap();
    assert_eq!(w.len(), 3);
    let states = m.encoder_states(&x);
    assert_eq!(&w[2], states.last().unwrap());

    let single = sample("h", 0);
    let w1 = m.encode_strokes(&single).unwrap();
    assert_eq!(w1.len(), 1);
    assert_eq!(&w1[0], m.encoder_states(&single).last().unwrap());
}

#[test]
fn encoder_has_no_lookahead() {
    let m = tiny(2);
    let x = sample("his", 1);
    let w = m.encode_strokes(&x).unwrap();
    let idx = x.eoc_indices().unwrap();
    let mut y = x.clone();
    // reverse the points of the last character after its first eoc index
    let (lo, hi) = (idx[1] + 1, y.len());
    y.points[lo..hi].reverse();
    y.points[hi - 1].eos = true;
    let w2 = m.encode_strokes(&y).unwrap();
    assert_eq!(w[0], w2[0]);
    assert_eq!(w[1], w2[1]);
}

#[test]
fn encoder_requires_eoc() {
    let m = tiny(0);
    let mut x = sample("hi", 0);
    x.eoc = None;
    assert!(m.encode_strokes(&x).is_err());
}

#[test]
fn character_matrices_are_prefix_causal() {
    let m = tiny(3);
    let a = m.char_dsd("his").unwrap();
    let b = m.char_dsd("him").unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a[0].dims(), (8, 8));
    assert_eq!(a[0], b[0]);
    assert_eq!(a[1], b[1]);
    assert_ne!(a[2], b[2]);
}

#[test]
fn stepwise_inference_matches_graph() {
    let m = tiny(4);
    let x = sample("his", 2);
    let mut g = Graph::new();
    let p = m.store.bind(&mut g, false);
    let we = m.enc_graph(&mut g, &p, &x).unwrap();
    let w = m.encode_strokes(&x).unwrap();
    for (t, row) in w.iter().enumerate() {
        assert!(close(g.value(we).row(t), row, 1e-12));
    }
    let chars = m.char_indices("his").unwrap();
    let cg = m.char_graph(&mut g, &p, &chars).unwrap();
    for (v, c) in cg.iter().zip(m.char_dsd("his").unwrap()) {
        assert!(close(g.value(*v).data(), c.data(), 1e-12));
    }
    let segs = g.constant(Tensor::from_rows(&w).unwrap());
    let r = m.restore_graph(&mut g, &p, segs).unwrap();
    let rs = m.restore_all(&w);
    for (t, row) in rs.iter().enumerate() {
        assert!(close(g.value(r).row(t), row, 1e-12));
    }
    assert!(close(&m.reconstruct_beta(&w).unwrap(), &rs[2], 0.0));
    assert_eq!(m.reconstruct_beta(&w[..1]).unwrap().len(), 8);
}

#[test]
fn mean_writer_dsd_examples() {
    let i2 = Tensor::identity(2);
    let two = i2.scale(2.0);
    let w = mean_writer_dsd(&[vec![2.0, 0.0], vec![2.0, 0.0]], &[i2.clone(), two]).unwrap();
    assert!(close(&w, &[1.5, 0.0], 1e-15));

    let c = Tensor::from_vec(2, 2, vec![2.0, 1.0, 0.5, 3.0]);
    let w1 = mean_writer_dsd(&[vec![1.0, -1.0]], std::slice::from_ref(&c)).unwrap();
    let expect = mat_vec(&mat_inverse(&c).unwrap(), &[1.0, -1.0]);
    assert!(close(&w1, &expect, 1e-15));

    // identical candidates: C_t w_t all map to v
    let v = vec![0.3, -0.7];
    let cs = vec![c.clone(), i2.clone(), c.scale(-1.5)];
    let ws: Vec<Vec<f64>> = cs.iter().map(|c| mat_vec(c, &v)).collect();
    assert!(close(&mean_writer_dsd(&ws, &cs).unwrap(), &v, 1e-12));

    let singular = Tensor::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
    let err = mean_writer_dsd(&[v.clone(), v.clone()], &[i2, singular]).unwrap_err();
    assert!(matches!(err, DsdError::SingularAt { index: 1 }), "{err:?}");
}

#[test]
fn reconstruct_alpha_examples() {
    let w = vec![0.5, -2.0, 1.0];
    assert_eq!(reconstruct_alpha(&Tensor::identity(3), &w), w);
    let c = Tensor::from_vec(3, 3, vec![1.0, 2.0, 0.0, 0.0, 1.0, -1.0, 3.0, 0.0, 1.0]);
    let a = reconstruct_alpha(&c, &w);
    let w2: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
    let a2 = reconstruct_alpha(&c, &w2);
    assert!(close(&a2, &a.iter().map(|x| 2.0 * x).collect::<Vec<_>>(), 1e-15));
    let wbar = mean_writer_dsd(&[a.clone()], std::slice::from_ref(&c)).unwrap();
    assert!(close(&reconstruct_alpha(&c, &wbar), &a, 1e-12));
}

#[test]
fn decoding_is_seeded_and_complete() {
    let m = tiny(5);
    let w = m.encode_strokes(&sample("his", 0)).unwrap();
    let opts = DecodeOptions { max_steps: 400, temperature: 1.0 };
    let a = m.decode_strokes(&w, "his", "w", &mut ChaCha8Rng::seed_from_u64(9), opts).unwrap();
    let b = m.decode_strokes(&w, "his", "w", &mut ChaCha8Rng::seed_from_u64(9), opts).unwrap();
    assert_eq!(a.sequence, b.sequence);
    let c = m.decode_strokes(&w, "his", "w", &mut ChaCha8Rng::seed_from_u64(10), opts).unwrap();
    assert_ne!(a.sequence.points, c.sequence.points);
    assert_eq!(c.sequence.text, "his");

    let greedy = DecodeOptions { max_steps: 400, temperature: 0.0 };
    let g1 = m.decode_strokes(&w, "his", "w", &mut ChaCha8Rng::seed_from_u64(1), greedy).unwrap();
    let g2 = m.decode_strokes(&w, "his", "w", &mut ChaCha8Rng::seed_from_u64(2), greedy).unwrap();
    assert_eq!(g1.sequence, g2.sequence);

    for d in [&a, &c, &g1] {
        assert!(d.sequence.points.last().unwrap().eos);
        if !d.truncated {
            assert_eq!(d.sequence.eoc_indices().unwrap().len(), 3);
            assert!(d.points_per_char.iter().all(|&n| n >= 1));
        }
    }
}

#[test]
fn decoding_reports_truncation() {
    let mut m = tiny(6);
    // force eoc probability toward 0
    let head = m.dec_head.b;
    let width = m.store.get(head).cols();
    m.store.get_mut(head).data_mut()[width - 1] = -50.0;
    let w = vec![vec![0.0; 8]; 2];
    let d = m
        .decode_strokes(&w, "ab", "w", &mut ChaCha8Rng::seed_from_u64(0), DecodeOptions { max_steps: 7, temperature: 1.0 })
        .unwrap();
    assert!(d.truncated);
    assert_eq!(d.sequence.len(), 7);
    assert!(d.sequence.eoc.is_none());
    assert!(m.decode_strokes(&w, "abc", "w", &mut ChaCha8Rng::seed_from_u64(0), DecodeOptions::default()).is_err());
}

#[test]
fn save_load_roundtrip() {
    let mut cfg = DsdConfig::small(8, 3);
    cfg.delta_scale = 0.1 + 0.2;
    let m = DsdModel::new(cfg, 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    m.save(dir.path()).unwrap();
    let back = DsdModel::load(dir.path()).unwrap();
    assert_eq!(back.config, m.config);
    assert_eq!(back.store.tensors(), m.store.tensors());
}

/// Teacher-forced α chain: encoder -> C -> inverse -> mean -> C w̄ -> decoder.
fn alpha_chain(m: &DsdModel, g: &mut Graph, p: &Bound, x: &StrokeSequence) -> dsd_core::Result<Var> {
    let chars = m.char_indices(&x.text)?;
    let w = m.enc_graph(g, p, x)?;
    let cs = m.char_graph(g, p, &chars)?;
    let mut cands = Vec::new();
    for (t, &c) in cs.iter().enumerate() {
        let ci = g.inverse(c)?;
        let wt = g.row(w, t);
        cands.push(mat_vec_graph(g, ci, wt)?);
    }
    let all = g.concat_rows(&cands)?;
    let wbar = g.mean_rows(all);
    let mut rows = Vec::new();
    for &c in &cs {
        rows.push(mat_vec_graph(g, c, wbar)?);
    }
    let wa = g.concat_rows(&rows)?;
    let spans = x.char_spans()?;
    let per_point: Vec<usize> = spans.iter().enumerate().flat_map(|(i, s)| std::iter::repeat_n(i, s.1 - s.0)).collect();
    let wp = g.gather_rows(wa, &per_point);
    let out = m.dec_graph(g, p, m.teacher_inputs(x), wp)?;
    let f = m.point_features(x);
    let t = Targets {
        dx: (0..x.len()).map(|i| f.get(i, 0)).collect(),
        dy: (0..x.len()).map(|i| f.get(i, 1)).collect(),
        eos: (0..x.len()).map(|i| f.get(i, 2)).collect(),
        eoc: x.eoc.as_ref().unwrap().iter().map(|&e| f64::from(u8::from(e))).collect(),
    };
    let (loc, eos, eoc) = mdn_losses(g, out, m.config.mixtures, &t)?;
    let s = g.add(loc, eos)?;
    g.add(s, eoc)
}

/// Moves every parameter off exact zeros (leaky-relu kinks) with a small
/// random offset.
fn generic_point(m: &mut DsdModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in m.store.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
}

/// The `per_tensor` largest-gradient coordinates of every tensor whose
/// largest gradient exceeds `floor`. Central differences cannot resolve
/// smaller entries: their round-off is about `eps * |loss| / h`.
fn resolvable_coords(m: &DsdModel, grads: &[Option<Tensor>], per_tensor: usize, floor: f64) -> Vec<(ParamId, usize)> {
    let mut out = Vec::new();
    for id in m.store.ids() {
        let Some(g) = &grads[id.index()] else { continue };
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.sort_by(|&a, &b| g.data()[b].abs().total_cmp(&g.data()[a].abs()));
        out.extend(order.into_iter().take(per_tensor).filter(|&i| g.data()[i].abs() > floor).map(|i| (id, i)));
    }
    out
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let mut cfg = DsdConfig::small(8, 3);
    cfg.delta_scale = 2.0;
    let mut m = DsdModel::new(cfg, 8).unwrap();
    generic_point(&mut m, 1);
    let style = SyntheticWriterStyle::plain("w0");
    let x = synth_sample(&style, "hi", &mut ChaCha8Rng::seed_from_u64(3)).unwrap();

    let mut g = Graph::new();
    let p = m.store.bind(&mut g, true);
    let y = alpha_chain(&m, &mut g, &p, &x).unwrap();
    let mut grads = g.backward(y);
    let groups = m.param_groups();
    let all: Vec<Option<Tensor>> = m.store.ids().map(|id| grads.take(p.var(id))).collect();
    // every group on the chain receives gradient
    for group in [ParamGroup::Encoder, ParamGroup::CharacterGenerator, ParamGroup::Decoder] {
        let norm: f64 = m
            .store
            .ids()
            .filter(|id| groups[id.index()] == group)
            .filter_map(|id| all[id.index()].as_ref())
            .map(|t| t.frobenius())
            .sum();
        assert!(norm > 0.0 && norm.is_finite(), "{group:?}");
    }

    // h = 1e-5 keeps truncation error on the sharply curved inverse path
    // below round-off; the floor sits well above eps * |loss| / h.
    let coords = resolvable_coords(&m, &all, 2, 1e-5);
    let checked: std::collections::BTreeSet<usize> = coords.iter().map(|c| c.0.index()).collect();
    assert!(checked.len() >= 45, "{} tensors checked", checked.len());
    let report = grad_check_store(&m.store, |g, p| alpha_chain(&m, g, p, &x), &coords, 1e-5, 1e-4).unwrap();
    assert!(report.passed(), "max rel err {}", report.max_rel_err);
}

proptest! {
    #[test]
    fn inverse_roundtrip(seed in 0u64..10_000, n in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Tensor::from_vec(n, n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect());
        for i in 0..n {
            c.set(i, i, c.get(i, i) + n as f64);
        }
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let back = mat_vec(&mat_inverse(&c).unwrap(), &mat_vec(&c, &w));
        prop_assert!(close(&back, &w, 1e-8));
    }

    #[test]
    fn decoder_outputs_satisfy_mdn_ranges(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..6 * 4 + 2).map(|_| rng.random_range(-30.0..30.0)).collect();
        let s = MdnStep::from_raw(&raw, 4);
        prop_assert!((s.pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(s.sigma_x.iter().chain(&s.sigma_y).all(|&v| v > 0.0));
        prop_assert!(s.rho.iter().all(|r| r.abs() < 1.0));
        prop_assert!(s.eos > 0.0 && s.eos < 1.0 && s.eoc > 0.0 && s.eoc < 1.0);
    }

    #[test]
    fn model_outputs_satisfy_mdn_ranges(seed in 0u64..1000) {
        let m = tiny(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<StrokePoint> = (0..6).map(|i| StrokePoint::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), i == 5)).collect();
        let x = StrokeSequence::new("w", "a", pts, Some(vec![false, false, false, false, false, true])).unwrap();
        let mut g = Graph::new();
        let p = m.store.bind(&mut g, false);
        let w = m.enc_graph(&mut g, &p, &x).unwrap();
        let wp = g.gather_rows(w, &[0; 6]);
        let out = m.dec_graph(&mut g, &p, m.teacher_inputs(&x), wp).unwrap();
        for t in 0..6 {
            let s = MdnStep::from_raw(g.value(out).row(t), 3);
            prop_assert!((s.pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(s.rho.iter().all(|r| r.abs() < 1.0));
        }
    }
}
