use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::decoder::{AfModulator, DecoderLayer};
use super::*;
use crate::autodiff::{Graph, ParamStore, Tensor};

fn small_config() -> NetConfig {
    NetConfig {
        num_queries: 4,
        channels: 8,
        query_dim: 8,
        backbone_width: 8,
        ..NetConfig::default()
    }
}

fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn image(w: usize, h: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..w * h).map(|_| [rng.random(), rng.random(), rng.random()]).collect()
}

fn intrinsics(w: usize, h: usize) -> CameraIntrinsics<f64> {
    CameraIntrinsics::from_fov(w, h, 60.0).unwrap()
}

fn zero(p: &mut ParamStore<f64>, name: &str) {
    let id = p.id(name).unwrap_or_else(|| panic!("no parameter {name}"));
    p.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
}

#[test]
fn backbone_grid_sizes_follow_strides() {
    let net = PlaneNet::<f64>::new(small_config(), 0).unwrap();
    for (w, h, want) in [
        (64, 64, [(16, 16), (8, 8), (4, 4), (2, 2)]),
        (96, 64, [(24, 16), (12, 8), (6, 4), (3, 2)]),
    ] {
        let mut g = Graph::new();
        let vars = net.build(&mut g, &image(w, h, 1), w, h, &intrinsics(w, h), 10.0).unwrap();
        let got: Vec<(usize, usize)> = vars.features.grids.iter().map(|f| (f.width, f.height)).collect();
        assert_eq!(got, want);
        for f in vars.features.grids {
            assert_eq!(g.value(f.var).shape(), (f.width * f.height, 8));
        }
    }
}

#[test]
fn indivisible_input_is_rejected() {
    let net = PlaneNet::<f64>::new(small_config(), 0).unwrap();
    let err = net.forward(&image(48, 64, 1), 48, 64, &intrinsics(48, 64), 10.0);
    assert!(matches!(err, Err(NetError::InputSize { width: 48, height: 64, multiple: 32 })));
}

#[test]
fn forward_is_deterministic_and_shaped() {
    let net = PlaneNet::<f64>::new(small_config(), 3).unwrap();
    let img = image(64, 32, 2);
    let k = intrinsics(64, 32);
    let a = net.forward(&img, 64, 32, &k, 10.0).unwrap();
    let b = net.forward(&img, 64, 32, &k, 10.0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.layers.len(), 3);
    assert_eq!((a.grid_width, a.grid_height), (16, 8));
    for l in &a.layers {
        assert_eq!((l.depth.width, l.depth.height), (16, 8));
        assert_eq!(l.assignment.shape(), (128, 4));
        for (n, t) in l.normal.vectors.iter().zip(&l.distance.values) {
            assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-6);
            assert!(*t > 0.0 && *t < 10.0);
        }
    }
    assert_eq!((a.depth.width, a.depth.height), (64, 32));
    assert!(a.depth.values.iter().all(|&d| d > 0.0 && d <= 10.0));
}

#[test]
fn single_query_modulator_weights_are_exactly_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = NetConfig {
        num_queries: 1,
        ..small_config()
    };
    let mut p = ParamStore::new();
    let m = AfModulator::new(&cfg, &mut p, "m", &mut rng);
    let mut g = Graph::new();
    let f = g.input(random_tensor(6, 8, &mut rng).cast());
    let q = g.input(random_tensor(1, 8, &mut rng));
    let (_, w) = m.apply(&mut g, &p, f, q);
    assert!(g.value(w).data().iter().all(|&v| v == 1.0));
}

#[test]
fn zero_value_projection_leaves_features_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = small_config();
    let mut p = ParamStore::new();
    let m = AfModulator::new(&cfg, &mut p, "m", &mut rng);
    zero(&mut p, "m.v.w");
    zero(&mut p, "m.v.b");
    let mut g = Graph::new();
    let feats = random_tensor(6, 8, &mut rng);
    let f = g.input(feats.clone());
    let q = g.input(random_tensor(4, 8, &mut rng));
    let (out, w) = m.apply(&mut g, &p, f, q);
    assert_eq!(g.value(out), &feats);
    for r in 0..6 {
        let s: f64 = g.value(w).row(r).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn single_support_mask_selects_one_value_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = small_config();
    let mut p = ParamStore::new();
    let layer = DecoderLayer::new(&cfg, &mut p, "d", &mut rng);
    let queries = random_tensor(4, 8, &mut rng);
    let feats = random_tensor(5, 8, &mut rng);
    let mut mask = vec![true; 4 * 5];
    for j in 0..5 {
        mask[j] = j == 3;
    }
    let mut g = Graph::new();
    let q = g.input(queries.clone());
    let f = g.input(feats);
    let trace = layer.apply(&mut g, &p, q, f, Some(&mask), 1);
    let weights = g.value(trace.cross_weights[0]);
    assert_eq!(weights.row(0), &[0.0, 0.0, 0.0, 1.0, 0.0]);
    // Query 0 receives exactly projected value row 3 plus its residual.
    let fv = g.value(f).clone();
    let mut g2 = Graph::new();
    let x = g2.input(fv);
    let v = layer.cross_v.apply(&mut g2, &p, x);
    let o = layer.cross_out.apply(&mut g2, &p, v);
    let want: Vec<f64> = g2.value(o).row(3).iter().zip(queries.row(0)).map(|(a, b)| a + b).collect();
    for (a, b) in g.value(trace.after_cross).row(0).iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn all_ones_mask_matches_unmasked_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut p = ParamStore::new();
    let layer = DecoderLayer::new(&small_config(), &mut p, "d", &mut rng);
    let queries = random_tensor(4, 8, &mut rng);
    let feats = random_tensor(5, 8, &mut rng);
    let run = |mask: Option<&[bool]>| {
        let mut g = Graph::new();
        let q = g.input(queries.clone());
        let f = g.input(feats.clone());
        let t = layer.apply(&mut g, &p, q, f, mask, 2);
        g.value(t.output).clone()
    };
    assert_eq!(run(None), run(Some(&[true; 20])));
}

#[test]
fn decoder_layer_is_query_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut p = ParamStore::new();
    let layer = DecoderLayer::new(&small_config(), &mut p, "d", &mut rng);
    let queries = random_tensor(4, 8, &mut rng);
    let feats = random_tensor(5, 8, &mut rng);
    let mask: Vec<bool> = (0..20).map(|i| i % 3 != 0).collect();
    let perm = [2, 0, 3, 1];
    let mut pmask = Vec::new();
    for &r in &perm {
        pmask.extend_from_slice(&mask[r * 5..(r + 1) * 5]);
    }
    let run = |q: &Tensor<f64>, m: &[bool]| {
        let mut g = Graph::new();
        let q = g.input(q.clone());
        let f = g.input(feats.clone());
        let t = layer.apply(&mut g, &p, q, f, Some(m), 1);
        g.value(t.output).clone()
    };
    let a = run(&queries, &mask).permute_rows(&perm);
    let b = run(&queries.permute_rows(&perm), &pmask);
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn mask_binarization_rules() {
    assert_eq!(binarize_mask(&[-50.0, -60.0, -70.0], 1, 3), vec![true; 3]);
    assert_eq!(binarize_mask(&[0.0f64; 6], 2, 3), vec![true; 6]);
    assert_eq!(binarize_mask(&[1.0, -1.0, -2.0], 1, 3), vec![true, false, false]);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..200 {
        let logits: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let base = binarize_mask(&logits, 2, 4);
        let mut raised = logits.clone();
        let i = rng.random_range(0..8);
        raised[i] += rng.random_range(0.0..2.0);
        let after = binarize_mask(&raised, 2, 4);
        // Holds for rows that had a selected entry before the raise; an empty
        // row's all-ones fallback can shrink once a logit crosses zero.
        for r in 0..2 {
            if logits[r * 4..(r + 1) * 4].iter().any(|&v| v >= 0.0) {
                let (b, a) = (&base[r * 4..(r + 1) * 4], &after[r * 4..(r + 1) * 4]);
                assert!(b.iter().zip(a).all(|(b, a)| !*b || *a));
            }
        }
    }
}

#[test]
fn predicted_mask_is_resampled_to_key_grid() {
    // One plane feature that only matches the left half of a 4x2 grid.
    let e = Tensor::from_vec(1, 1, vec![1.0]);
    let f = Tensor::from_vec(8, 1, vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0]);
    assert_eq!(predict_mask(&e, &f, 4, 2, 2, 1), vec![true, false]);
    let neg = Tensor::from_vec(1, 1, vec![-1.0]);
    let pos = Tensor::from_vec(8, 1, vec![1.0; 8]);
    assert_eq!(predict_mask(&neg, &pos, 4, 2, 2, 1), vec![true, true]);
}

#[test]
fn decoder_depth_and_modulator_flags() {
    let net = PlaneNet::<f64>::new(small_config(), 0).unwrap();
    let mut g = Graph::new();
    let vars = net.build(&mut g, &image(32, 32, 1), 32, 32, &intrinsics(32, 32), 10.0).unwrap();
    assert_eq!(vars.layers.len(), 3);
    assert!(vars.layers[0].modulation_weights.is_none());
    assert!(vars.layers[0].mask.is_none());
    assert!(vars.layers[1].modulation_weights.is_some() && vars.layers[2].modulation_weights.is_some());
    assert_eq!(vars.layers[1].mask.as_ref().unwrap().len(), 4 * 2 * 2);
    assert_eq!(vars.layers[2].mask.as_ref().unwrap().len(), 4 * 4 * 4);

    let plain = PlaneNet::<f64>::new(NetConfig { af_modulators: false, ..small_config() }, 0).unwrap();
    assert!(plain.params.iter().all(|(n, _)| !n.starts_with("modulator")));
    assert!(net.params.id("modulator.1.q.w").is_some() && net.params.id("modulator.0.q.w").is_none());
    let mut g = Graph::new();
    let vars = plain.build(&mut g, &image(32, 32, 1), 32, 32, &intrinsics(32, 32), 10.0).unwrap();
    assert!(vars.layers.iter().all(|l| l.modulation_weights.is_none()));
}

#[test]
fn zeroed_projections_make_a_layer_pure_residual() {
    let cfg = NetConfig {
        num_layers: 1,
        ..small_config()
    };
    let mut net = PlaneNet::<f64>::new(cfg, 4).unwrap();
    for name in ["cross.v", "cross.out", "self.v", "self.out", "ffn.out"] {
        zero(&mut net.params, &format!("decoder.0.{name}.w"));
        zero(&mut net.params, &format!("decoder.0.{name}.b"));
    }
    let mut g = Graph::new();
    let vars = net.build(&mut g, &image(32, 32, 1), 32, 32, &intrinsics(32, 32), 10.0).unwrap();
    assert_eq!(g.value(vars.layers[0].queries), net.params.get(net.queries_id()));
}

#[test]
fn heads_normalize_and_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = small_config();
    let mut p = ParamStore::new();
    let heads = heads::PlaneHeads::new(&cfg, &mut p, &mut rng);
    let row = random_tensor(1, 8, &mut rng);
    let mut data = row.data().to_vec();
    data.extend_from_slice(row.data());
    let mut g = Graph::new();
    let q = g.input(Tensor::from_vec(2, 8, data));
    let b = heads.apply(&mut g, &p, q);
    for v in [b.normals, b.distance_logits, b.features] {
        assert_eq!(g.value(v).row(0), g.value(v).row(1));
    }
    assert_eq!(g.value(b.features).cols(), cfg.channels);

    let mut g = Graph::new();
    let raw = g.input(Tensor::from_vec(2, 3, vec![0.0, 0.0, 2.0, 0.0, 0.0, 0.0]));
    let n = g.normalize_rows3(raw, DEGENERATE_NORM);
    assert_eq!(g.value(n).data(), &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
}

#[test]
fn assignment_closed_forms() {
    let mut g = Graph::new();
    let e = g.input(Tensor::from_vec(2, 1, vec![0.0, 0.0]));
    let f = g.input(Tensor::from_vec(1, 1, vec![1.0]));
    let s = pixel_assignment(&mut g, e, f);
    assert_eq!(g.value(s).data(), &[0.5, 0.5]);

    let e = g.input(Tensor::from_vec(2, 1, vec![3f64.ln(), 0.0]));
    let s = pixel_assignment(&mut g, e, f);
    let s = g.value(s).data();
    assert!((s[0] - 0.75).abs() < 1e-15 && (s[1] - 0.25).abs() < 1e-15);
}

fn clamp(max: f64) -> DepthClamp<f64> {
    DepthClamp {
        min_depth: 1e-3,
        max_depth: max,
        denom_eps: DEFAULT_DENOM_EPS,
    }
}

#[test]
fn one_hot_fronto_parallel_plane() {
    let k = intrinsics(8, 8);
    let rays = grid_rays(&k, 8, 8, 4);
    let mut g = Graph::new();
    let n = g.input(Tensor::from_vec(2, 3, vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]));
    let t = g.input(Tensor::from_vec(2, 1, vec![0.0, 3.0]));
    let s = g.input(Tensor::from_vec(4, 2, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]));
    let m = assemble_maps(&mut g, n, t, s, rays, clamp(10.0));
    assert!(g.value(m.distance).data().iter().all(|&d| d == 5.0));
    assert!(g.value(m.depth).data().iter().all(|&d| (d - 5.0).abs() < 1e-12));
}

#[test]
fn mixed_normals_renormalize() {
    let mut g = Graph::new();
    let n = g.input(Tensor::from_vec(2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]));
    let t = g.input(Tensor::from_vec(2, 1, vec![0.0, 0.0]));
    let s = g.input(Tensor::from_vec(1, 2, vec![0.5, 0.5]));
    let m = assemble_maps(&mut g, n, t, s, vec![[0.0, 0.0, 1.0]], clamp(10.0));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let v = g.value(m.normal).data();
    assert!((v[0] - h).abs() < 1e-15 && (v[1] - h).abs() < 1e-15 && v[2] == 0.0);
}

#[test]
fn assembly_is_invariant_to_basis_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let k = intrinsics(16, 8);
    let rays = grid_rays(&k, 16, 8, 4);
    let mut normals = random_tensor(5, 3, &mut rng);
    normals.data_mut().chunks_mut(3).for_each(|r| r[2] = 2.0);
    let logits = random_tensor(5, 1, &mut rng);
    let s_logits = random_tensor(8, 5, &mut rng);
    let run = |perm: &[usize]| {
        let mut g = Graph::new();
        let n = g.input(normals.permute_rows(perm));
        let t = g.input(logits.permute_rows(perm));
        let sl = g.input(s_logits.transpose().permute_rows(perm).transpose());
        let s = g.softmax_rows(sl, None);
        let m = assemble_maps(&mut g, n, t, s, rays.clone(), clamp(10.0));
        g.value(m.depth).clone()
    };
    let a = run(&[0, 1, 2, 3, 4]);
    let b = run(&[3, 1, 4, 0, 2]);
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn end_to_end_query_permutation_invariance() {
    let mut net = PlaneNet::<f64>::new(small_config(), 13).unwrap();
    // Spread the queries so the permutation is not near-trivial.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let qid = net.queries_id();
    let spread = random_tensor(4, 8, &mut rng);
    *net.params.get_mut(qid) = spread.clone();
    let img = image(32, 32, 3);
    let k = intrinsics(32, 32);
    let base = net.forward(&img, 32, 32, &k, 10.0).unwrap().depth;
    *net.params.get_mut(qid) = spread.permute_rows(&[1, 3, 0, 2]);
    let permuted = net.forward(&img, 32, 32, &k, 10.0).unwrap().depth;
    for (a, b) in base.values.iter().zip(&permuted.values) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn from_params_round_trip_and_mismatch() {
    let net = PlaneNet::<f32>::new(small_config(), 2).unwrap();
    let again = PlaneNet::from_params(small_config(), &net.params).unwrap();
    assert_eq!(again.params, net.params);
    let other = NetConfig {
        af_modulators: false,
        ..small_config()
    };
    assert!(matches!(PlaneNet::from_params(other, &net.params), Err(NetError::Shape(_))));
    let wider = NetConfig {
        channels: 16,
        ..small_config()
    };
    assert!(matches!(PlaneNet::from_params(wider, &net.params), Err(NetError::Shape(_))));
}
