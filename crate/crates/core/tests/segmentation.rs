use dsd_core::data::synth::{random_letter_corpus, random_styles, synth_corpus, WORDS};
use dsd_core::data::Alphabet;
use dsd_core::numeric::Tensor;
use dsd_core::segmentation::lattice::log_softmax;
use dsd_core::segmentation::{
    decode_alignment, seg_ctc_loss, train_segmenter, LatticeOptions, SegLattice, SegNet, SegNetConfig,
    SegTrainConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent admissibility test for one frame-level path.
fn admissible(path: &[usize], label: &[usize], blank: usize, blank_between_distinct: bool) -> bool {
    let n = path.len();
    if path[0] == blank || path[n - 1] == blank {
        return false;
    }
    let mut runs: Vec<usize> = Vec::new();
    for t in 0..n {
        if path[t] == blank {
            if path[t - 1] == blank {
                return false;
            }
            if !blank_between_distinct && path[t - 1] != path[t + 1] {
                return false;
            }
            continue;
        }
        let new_run = t == 0 || path[t - 1] != path[t];
        if new_run {
            runs.push(path[t]);
        }
    }
    runs == label
}

/// Sum and max of path probabilities plus the path count, by enumeration.
fn enumerate(p: &Tensor, label: &[usize], blank: usize, flag: bool) -> (f64, f64, usize) {
    let (n, q) = p.dims();
    let mut path = vec![0usize; n];
    let (mut sum, mut best, mut count) = (0.0, 0.0f64, 0usize);
    for code in 0..q.pow(n as u32) {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % q;
            c /= q;
        }
        if admissible(&path, label, blank, flag) {
            let pr: f64 = path.iter().enumerate().map(|(t, &k)| p.get(t, k)).product();
            sum += pr;
            best = best.max(pr);
            count += 1;
        }
    }
    (sum, best, count)
}

fn random_probs(rng: &mut ChaCha8Rng, n: usize, q: usize) -> Tensor {
    let logits = Tensor::from_vec(n, q, (0..n * q).map(|_| rng.random_range(-2.0..2.0)).collect());
    log_softmax(&logits).map(f64::exp)
}

fn labels(len: usize, classes: usize) -> Vec<Vec<usize>> {
    (0..classes.pow(len as u32))
        .map(|mut code| {
            (0..len)
                .map(|_| {
                    let c = code % classes;
                    code /= classes;
                    c
                })
                .collect()
        })
        .collect()
}

#[test]
fn forward_equals_enumeration_small_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for q in 2..=4 {
        let blank = q - 1;
        for m in 1..=4 {
            for label in labels(m, q - 1) {
                for n in 1..=8 {
                    let p = random_probs(&mut rng, n, q);
                    for flag in [true, false] {
                        let lat = SegLattice::new(&label, blank, LatticeOptions { blank_between_distinct: flag }).unwrap();
                        let (sum, best, count) = enumerate(&p, &label, blank, flag);
                        match lat.log_likelihood(&p.map(f64::ln)) {
                            Ok(ll) => {
                                assert!((ll.exp() - sum).abs() < 1e-9, "q={q} {label:?} n={n}");
                                let a = lat.decode(&p.map(f64::ln)).unwrap();
                                assert!((a.log_prob.exp() - best).abs() < 1e-12);
                                a.validate(m).unwrap();
                            }
                            Err(_) => assert_eq!(count, 0, "q={q} {label:?} n={n}"),
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn uniform_logits_closed_form() {
    let q = 4;
    for label in [vec![0], vec![0, 1], vec![1, 1], vec![0, 2, 2, 1]] {
        for n in label.len() + 1..=7 {
            let z = Tensor::zeros(n, q);
            let (_, _, count) = enumerate(&z.map(|_| 0.25), &label, 3, true);
            let (loss, _) = seg_ctc_loss(&z, &label, 3, LatticeOptions::default()).unwrap();
            let expect = -((count as f64).ln() - n as f64 * (q as f64).ln());
            assert!((loss - expect).abs() < 1e-12, "{label:?} n={n}");
        }
    }
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (label, n) in [(vec![0, 1, 1], 7), (vec![2, 0], 5), (vec![1], 3)] {
        let z = Tensor::from_vec(n, 4, (0..4 * n).map(|_| rng.random_range(-2.0..2.0)).collect());
        let (_, grad) = seg_ctc_loss(&z, &label, 3, LatticeOptions::default()).unwrap();
        let h = 1e-5;
        for i in 0..z.len() {
            let mut zp = z.clone();
            zp.data_mut()[i] += h;
            let mut zm = z.clone();
            zm.data_mut()[i] -= h;
            let fp = seg_ctc_loss(&zp, &label, 3, LatticeOptions::default()).unwrap().0;
            let fm = seg_ctc_loss(&zm, &label, 3, LatticeOptions::default()).unwrap().0;
            let num = (fp - fm) / (2.0 * h);
            let a = grad.data()[i];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-8);
            assert!(rel < 1e-4, "{label:?} i={i}: {a} vs {num}");
        }
    }
}

proptest! {
    #[test]
    fn decoded_alignment_is_monotone(seed in 0u64..5000, m in 1usize..6, extra in 0usize..10, flag: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let label: Vec<usize> = (0..m).map(|_| rng.random_range(0..5)).collect();
        let lat = SegLattice::new(&label, 5, LatticeOptions { blank_between_distinct: flag }).unwrap();
        let n = lat.min_len() + extra;
        let z = Tensor::from_vec(n, 6, (0..6 * n).map(|_| rng.random_range(-3.0..3.0)).collect());
        let a = decode_alignment(&z, &label, 5, LatticeOptions { blank_between_distinct: flag }).unwrap();
        prop_assert!(a.validate(m).is_ok());
        prop_assert_eq!(a.char_index.len(), n);
    }
}

/// Boundary accuracy of a small BiLSTM trained on short random strings and
/// evaluated on dictionary words by writers it has not seen.
#[test]
fn trained_segmenter_places_boundaries() {
    let styles = random_styles(12, 11);
    let train = random_letter_corpus(&styles[..8], 2000, 3, 3).unwrap();
    let words: Vec<&str> = WORDS.iter().copied().skip(100).take(20).collect();
    let test = synth_corpus(&styles[8..], &words, 5).unwrap();
    let config = SegNetConfig { hidden: 32, layers: 2, ..SegNetConfig::default() };
    let mut net = SegNet::new(config, Alphabet::default(), 1);
    let cfg = SegTrainConfig {
        steps: 2400,
        flat_start_steps: 800,
        batch: 4,
        learning_rate: 3e-3,
        seed: 2,
        ..SegTrainConfig::default()
    };
    let trace = train_segmenter(&mut net, &train, &cfg).unwrap();
    assert!(trace.iter().all(|l| l.is_finite()));

    let (mut hit, mut total) = (0usize, 0usize);
    for s in &test {
        let truth = s.eoc_indices().unwrap();
        let pred = net.segment(s).unwrap().eoc_indices().unwrap();
        for (a, b) in truth.iter().zip(&pred) {
            total += 1;
            if a.abs_diff(*b) <= 2 {
                hit += 1;
            }
        }
    }
    let acc = hit as f64 / total as f64;
    println!("boundary accuracy (+-2 points): {acc:.3}");
    assert!(acc >= 0.9, "boundary accuracy {acc}");
}
