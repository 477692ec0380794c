//! Checks shared by the integration tests and the acceptance runner. Each
//! returns a verdict plus a one-line detail string.

#![allow(dead_code)]

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use odxu_core::dec::{dec_loss_grad, Centroids, DecModel};
use odxu_core::gbdt::{split_gain, train, BoostParams, NodeKind, Tree, TreeEnsemble};
use odxu_core::metrics::{auroc, tp_at_tn};
use odxu_core::nn::{train_autoencoder, Activation, AutoencoderSpec, DenseLayer, Network, TrainConfig};
use odxu_core::payload::{extract_capture, parse_pcap, FlowKey, PROTO_TCP, PROTO_UDP};
use odxu_core::stopping::EarlyStop;
use odxu_core::uq::{exact_shap, shapley_weight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Check {
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Check {
    fn new(pass: bool, detail: String, started: Instant) -> Self {
        Check {
            pass,
            detail,
            elapsed: started.elapsed(),
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, r: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.gen_range(-1.0..1.0))
}

// ---- split gain ----

pub fn gain_check() -> Check {
    let t = Instant::now();
    let p = |lambda, gamma| BoostParams {
        lambda,
        gamma,
        ..BoostParams::default()
    };
    let hand = (split_gain(2.0, 2.0, -1.0, 1.0, &p(1.0, 0.0)) - 19.0 / 24.0).abs();
    let mut worst_gamma = 0.0f64;
    for &(g, h, gamma) in &[(1.0, 1.0, 0.3), (-2.5, 4.0, 1.0), (0.0, 0.5, 2.0), (7.0, 3.0, 0.0)] {
        worst_gamma = worst_gamma.max((split_gain(g, h, g, h, &p(0.0, gamma)) + gamma).abs());
    }
    Check::new(
        hand <= 1e-12 && worst_gamma <= 1e-12,
        format!("hand case err {hand:.1e}, symmetric split err {worst_gamma:.1e}"),
        t,
    )
}

// ---- clustering-loss gradient ----

fn dec_loss(m: &DecModel, x: ArrayView2<f64>, p: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
    let z = m.transform(x).unwrap();
    dec_loss_grad(z.view(), &m.centroids, p, y).unwrap().loss.total()
}

/// Central differences against the analytic gradient for every encoder
/// weight, bias and centroid coordinate of a small model.
pub fn dec_gradient_check(seed: u64) -> Check {
    let t = Instant::now();
    let mut r = rng(seed);
    let encoder = Network::new(vec![
        DenseLayer::init(3, 3, Activation::Relu, &mut r),
        DenseLayer::init(3, 2, Activation::Linear, &mut r),
    ])
    .unwrap();
    let mut model = DecModel {
        encoder,
        centroids: Centroids::new(random_matrix(3, 2, &mut r)).unwrap(),
        class_count: 3,
    };
    for l in model.encoder.layers_mut() {
        l.bias.mapv_inplace(|_| r.gen_range(0.05..0.3));
    }
    let x = random_matrix(8, 3, &mut r);
    let labels: Vec<usize> = (0..8).map(|i| i % 3).collect();
    let y = odxu_core::dec::one_hot(&labels, 3).unwrap();
    let p = odxu_core::dec::target_distribution(model.soft_assign(x.view()).unwrap().view());
    let (_, grads, du) = model.loss_and_grads(x.view(), y.view(), p.view()).unwrap();

    let h = 1e-6;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let n_layers = model.encoder.layers().len();
    for li in 0..n_layers {
        let (gw, gb) = &grads.layers[li];
        let shape = model.encoder.layers()[li].weights.dim();
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                let fd = |delta: f64| {
                    let mut m = model.clone();
                    m.encoder.layers_mut()[li].weights[[i, j]] += delta;
                    dec_loss(&m, x.view(), p.view(), y.view())
                };
                numeric.push((fd(h) - fd(-h)) / (2.0 * h));
                analytic.push(gw[[i, j]]);
            }
            let fd = |delta: f64| {
                let mut m = model.clone();
                m.encoder.layers_mut()[li].bias[i] += delta;
                dec_loss(&m, x.view(), p.view(), y.view())
            };
            numeric.push((fd(h) - fd(-h)) / (2.0 * h));
            analytic.push(gb[i]);
        }
    }
    let u = model.centroids.matrix().clone();
    for i in 0..u.nrows() {
        for j in 0..u.ncols() {
            let mut fd = |delta: f64| {
                let mut v = u.clone();
                v[[i, j]] += delta;
                model.centroids = Centroids::new(v).unwrap();
                dec_loss(&model, x.view(), p.view(), y.view())
            };
            numeric.push((fd(h) - fd(-h)) / (2.0 * h));
            analytic.push(du[[i, j]]);
        }
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    let rel = norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-300);
    let params = analytic.len();
    let c = Check::new(false, String::new(), t);
    let pass = rel <= 1e-4 && params <= 30 && c.elapsed < Duration::from_secs(5);
    Check {
        pass,
        detail: format!("{params} params, relative error {rel:.2e}"),
        ..c
    }
}

// ---- exact Shapley values ----

/// Direct enumeration: builds every hybrid row, calls the model's own
/// prediction, averages over the background, then sums weighted marginal
/// contributions.
pub fn shap_oracle(model: &TreeEnsemble, x: &[f64], bg: ArrayView2<f64>, class: usize) -> Vec<f64> {
    let d = x.len();
    let value = |mask: usize| {
        let mut acc = 0.0;
        for b in bg.rows() {
            let row: Vec<f64> = (0..d).map(|j| if mask >> j & 1 == 1 { x[j] } else { b[j] }).collect();
            acc += model.predict_proba(&row).unwrap()[class];
        }
        acc / bg.nrows() as f64
    };
    let values: Vec<f64> = (0..1usize << d).map(value).collect();
    (0..d)
        .map(|i| {
            let mut phi = 0.0;
            for s in 0..values.len() {
                if s >> i & 1 == 0 {
                    phi += shapley_weight(s.count_ones() as usize, d) * (values[s | 1 << i] - values[s]);
                }
            }
            phi
        })
        .collect()
}

pub struct ShapCase {
    pub model: TreeEnsemble,
    pub x: Vec<f64>,
    pub bg: Array2<f64>,
    pub class: usize,
    /// Column held constant in the training data and everywhere else.
    pub dummy: usize,
}

/// A small random ensemble whose last column is constant, so no tree can
/// split on it.
pub fn shap_case(seed: u64) -> ShapCase {
    let mut r = rng(seed);
    let d = r.gen_range(2..=6);
    let k = r.gen_range(2..=3);
    let n = 40;
    let mut x = random_matrix(n, d + 1, &mut r);
    x.column_mut(d).fill(0.5);
    let labels: Vec<usize> = (0..n).map(|i| (i + r.gen_range(0..2)) % k).collect();
    let params = BoostParams {
        rounds: r.gen_range(1..=4),
        max_depth: r.gen_range(1..=3),
        learning_rate: 0.5,
        min_child_hessian: 0.0,
        seed,
        ..BoostParams::default()
    };
    let model = train(x.view(), &labels, k, &params).unwrap();
    let mut q = random_matrix(1, d + 1, &mut r).row(0).to_vec();
    q[d] = 0.5;
    let mut bg = random_matrix(r.gen_range(1..=6), d + 1, &mut r);
    bg.column_mut(d).fill(0.5);
    ShapCase {
        model,
        x: q,
        bg,
        class: r.gen_range(0..k),
        dummy: d,
    }
}

pub struct ShapAxioms {
    pub efficiency: f64,
    pub dummy: f64,
    pub symmetry: f64,
    pub linearity: f64,
    pub oracle_mismatches: usize,
}

fn swap_features(model: &TreeEnsemble, a: usize, b: usize) -> TreeEnsemble {
    let mut m = model.clone();
    for tr in &mut m.trees {
        for n in &mut tr.nodes {
            if let NodeKind::Split { feature, .. } = &mut n.kind {
                if *feature == a {
                    *feature = b;
                } else if *feature == b {
                    *feature = a;
                }
            }
        }
    }
    m
}

fn scale_leaves(tr: &mut Tree, f: f64) {
    for n in &mut tr.nodes {
        if let NodeKind::Leaf { weight } = &mut n.kind {
            *weight *= f;
        }
    }
}

pub fn shap_axioms(c: &ShapCase) -> ShapAxioms {
    let row = exact_shap(&c.model, &c.x, c.bg.view(), c.class).unwrap();
    let full = c.model.predict_proba(&c.x).unwrap()[c.class];
    let base: f64 = c
        .bg
        .rows()
        .into_iter()
        .map(|b| c.model.predict_proba(b.as_slice().unwrap()).unwrap()[c.class])
        .sum::<f64>()
        / c.bg.nrows() as f64;
    let efficiency = (row.phi.iter().sum::<f64>() - (full - base)).abs();
    let dummy = row.phi[c.dummy].abs();

    // Symmetry: average the ensemble with a copy whose features 0 and 1
    // are swapped, make the query tie on them and close the background
    // under the swap. Features 0 and 1 must then earn equal credit.
    let swapped = swap_features(&c.model, 0, 1);
    let mut sym_model = c.model.clone();
    for tr in sym_model.trees.iter_mut() {
        scale_leaves(tr, 0.5);
    }
    for mut tr in swapped.trees {
        scale_leaves(&mut tr, 0.5);
        sym_model.trees.push(tr);
    }
    let mut sym_x = c.x.clone();
    sym_x[1] = sym_x[0];
    let mut sym_bg = Array2::zeros((2 * c.bg.nrows(), c.bg.ncols()));
    for (i, b) in c.bg.rows().into_iter().enumerate() {
        sym_bg.row_mut(2 * i).assign(&b);
        let mut s = b.to_owned();
        s.swap(0, 1);
        sym_bg.row_mut(2 * i + 1).assign(&s);
    }
    let sym = exact_shap(&sym_model, &sym_x, sym_bg.view(), c.class).unwrap();
    let symmetry = (sym.phi[0] - sym.phi[1]).abs();

    // Linearity in the background: explaining against the union of two
    // equal-size halves is the mean of explaining against each half.
    let linearity = if c.bg.nrows() >= 2 && c.bg.nrows().is_multiple_of(2) {
        let h = c.bg.nrows() / 2;
        let a = exact_shap(&c.model, &c.x, c.bg.slice(ndarray::s![..h, ..]), c.class).unwrap();
        let b = exact_shap(&c.model, &c.x, c.bg.slice(ndarray::s![h.., ..]), c.class).unwrap();
        row.phi
            .iter()
            .zip(a.phi.iter().zip(&b.phi))
            .map(|(u, (p, q))| (u - 0.5 * (p + q)).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let oracle = shap_oracle(&c.model, &c.x, c.bg.view(), c.class);
    let oracle_mismatches = oracle.iter().zip(&row.phi).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    ShapAxioms {
        efficiency,
        dummy,
        symmetry,
        linearity,
        oracle_mismatches,
    }
}

/// Symmetry proper: a hand-built model that treats features 0 and 1
/// identically, explained at a point and background that are swap-invariant.
pub fn shap_symmetric_pair() -> f64 {
    let trees = vec![
        Tree::stump(0, 0, 0.0, -0.4, 0.7, 1.0),
        Tree::stump(0, 1, 0.0, -0.4, 0.7, 1.0),
        Tree::stump(1, 2, 0.2, 0.3, -0.1, 1.0),
    ];
    let model = TreeEnsemble {
        trees,
        class_count: 2,
        n_features: 3,
        base_score: 0.0,
        params: BoostParams::default(),
    };
    let bg = ndarray::arr2(&[[-1.0, -1.0, 0.0], [1.0, 1.0, 0.5], [-0.5, -0.5, 0.9]]);
    let row = exact_shap(&model, &[0.8, 0.8, 0.1], bg.view(), 0).unwrap();
    (row.phi[0] - row.phi[1]).abs()
}

pub fn shap_check(cases: usize, seed: u64) -> Check {
    let t = Instant::now();
    let mut worst = [0.0f64; 4];
    let mut mismatches = 0;
    for i in 0..cases {
        let a = shap_axioms(&shap_case(seed.wrapping_add(i as u64)));
        for (w, v) in worst.iter_mut().zip([a.efficiency, a.dummy, a.symmetry, a.linearity]) {
            *w = w.max(v);
        }
        mismatches += a.oracle_mismatches;
    }
    let pair = shap_symmetric_pair();
    let c = Check::new(false, String::new(), t);
    let pass = worst.iter().all(|&w| w <= 1e-9) && pair <= 1e-9 && mismatches == 0 && c.elapsed < Duration::from_secs(60);
    Check {
        pass,
        detail: format!(
            "{cases} ensembles; max err efficiency {:.1e} dummy {:.1e} symmetry {:.1e}/{pair:.1e} linearity {:.1e}; {mismatches} oracle bit mismatches",
            worst[0], worst[1], worst[2], worst[3]
        ),
        ..c
    }
}

// ---- AUROC ----

pub fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let (mut p, mut n) = (0usize, 0usize);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
        } else {
            n += 1;
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if !lj {
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / (p * n) as f64
}

/// A labeled score set with at least one of each label and frequent ties.
pub fn auroc_case(seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut r = rng(seed);
    let n = r.gen_range(2..=200);
    let levels = r.gen_range(2..=30);
    let mut labels: Vec<bool> = (0..n).map(|_| r.gen_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = labels
        .iter()
        .map(|&l| (r.gen_range(0..levels) + if l { levels / 3 } else { 0 }) as f64 / levels as f64)
        .collect();
    (scores, labels)
}

pub fn auroc_check(sets: usize, seed: u64) -> Check {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..sets {
        let (s, l) = auroc_case(seed.wrapping_add(i as u64));
        worst = worst.max((auroc(&s, &l).unwrap() - pairwise_auroc(&s, &l)).abs());
    }
    Check::new(worst <= 1e-12, format!("{sets} sets, max deviation {worst:.1e}"), t)
}

pub fn tp_at_tn_null_check(seed: u64) -> Check {
    let t = Instant::now();
    let mut r = rng(seed);
    let n = 20_000;
    let scores: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let v = tp_at_tn(&scores, &labels, 0.95).unwrap();
    Check::new((v.tpr - 0.05).abs() <= 0.02, format!("tpr {:.4} at threshold {:.4}", v.tpr, v.threshold), t)
}

// ---- capture parsing ----

pub struct HandPacket {
    pub ts: (u32, u32),
    pub flow: FlowKey,
    pub payload: Vec<u8>,
}

pub fn hand_packets() -> Vec<HandPacket> {
    let flow = |a: [u8; 4], b: [u8; 4], sp, dp, proto| FlowKey {
        src_ip: a.into(),
        dst_ip: b.into(),
        src_port: sp,
        dst_port: dp,
        protocol: proto,
    };
    vec![
        HandPacket {
            ts: (1_600_000_000, 1),
            flow: flow([10, 0, 0, 1], [10, 0, 0, 2], 40000, 80, PROTO_TCP),
            payload: b"GET / HTTP/1.1\r\n\r\n".to_vec(),
        },
        HandPacket {
            ts: (1_600_000_001, 999_999),
            flow: flow([192, 168, 1, 7], [8, 8, 8, 8], 5353, 53, PROTO_UDP),
            payload: (0..=255u8).cycle().take(1600).collect(),
        },
        HandPacket {
            ts: (1_600_000_002, 0),
            flow: flow([172, 16, 0, 9], [172, 16, 0, 1], 1, 65535, PROTO_TCP),
            payload: vec![0xAB],
        },
    ]
}

/// Classic little-endian capture assembled byte by byte.
pub fn hand_capture(pkts: &[HandPacket]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(&0xa1b2_c3d4u32.to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&4u16.to_le_bytes());
    b.extend_from_slice(&0i32.to_le_bytes());
    b.extend_from_slice(&0u32.to_le_bytes());
    b.extend_from_slice(&65535u32.to_le_bytes());
    b.extend_from_slice(&1u32.to_le_bytes());
    for p in pkts {
        let frame = odxu_core::payload::build_ipv4_frame(&p.flow, &p.payload);
        b.extend_from_slice(&p.ts.0.to_le_bytes());
        b.extend_from_slice(&p.ts.1.to_le_bytes());
        b.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        b.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        b.extend_from_slice(&frame);
    }
    b
}

pub fn pcap_check() -> Check {
    let t = Instant::now();
    let pkts = hand_packets();
    let bytes = hand_capture(&pkts);
    let raw = parse_pcap(&bytes[..]).unwrap();
    let mut ok = raw.len() == pkts.len();
    for (r, p) in raw.iter().zip(&pkts) {
        ok &= (r.ts_sec, r.ts_usec) == p.ts && r.link_bytes == odxu_core::payload::build_ipv4_frame(&p.flow, &p.payload);
    }
    let (out, stats) = extract_capture(&bytes[..]).unwrap();
    ok &= out.len() == pkts.len() && stats.emitted == pkts.len();
    for ((payload, flow), p) in out.iter().zip(&pkts) {
        let n = p.payload.len().min(odxu_core::PAYLOAD_LEN);
        let bytes = payload.as_bytes();
        ok &= *flow == p.flow && bytes[..n] == p.payload[..n] && bytes[n..].iter().all(|&b| b == 0);
    }
    Check::new(ok, format!("{} packets, {} payload rows", raw.len(), out.len()), t)
}

// ---- early stopping ----

/// Halt epoch by rescanning the whole prefix at every epoch.
pub fn brute_force_halt(losses: &[f64], eta: usize, delta: f64) -> usize {
    for t in 0..losses.len() {
        let (mut best, mut last) = (losses[0], 0);
        for (s, &l) in losses.iter().enumerate().take(t + 1).skip(1) {
            if l < best - delta {
                best = l;
                last = s;
            }
        }
        if t - last >= eta {
            return t + 1;
        }
    }
    losses.len()
}

pub fn early_stop_check(seed: u64) -> Check {
    use odxu_core::dec::train_dec;
    use odxu_core::synth::BlobSpec;
    let t = Instant::now();
    let data = BlobSpec::three_class(80, seed).dataset().unwrap();
    let x = data.features();
    let names = data.labels.names().to_vec();
    let y: Vec<usize> = data.rows.iter().map(|r| r.label.0 as usize).collect();
    let k = names.len();
    let spec = AutoencoderSpec {
        hidden: vec![16],
        latent_dim: 4,
        ..AutoencoderSpec::default()
    };
    let cfg = TrainConfig {
        max_epochs: 45,
        batch_size: 32,
        learning_rate: 3e-3,
        seed,
        ..TrainConfig::default()
    };
    let (ae, ae_full) = train_autoencoder(x.view(), &spec, &cfg, &EarlyStop::never()).unwrap();
    let (_, dec_full) = train_dec(&ae, x.view(), &y, k, &cfg, &EarlyStop::never()).unwrap();
    let mut bad = Vec::new();
    let mut early = 0;
    for eta in [10, 15, 20] {
        for d_ae in [0.0005, 0.001] {
            let stop = EarlyStop::new(eta, d_ae).unwrap();
            let (_, tr) = train_autoencoder(x.view(), &spec, &cfg, &stop).unwrap();
            let want = brute_force_halt(&ae_full.valid, eta, d_ae);
            early += usize::from(want < cfg.max_epochs);
            if tr.epochs() != want || tr.valid[..] != ae_full.valid[..want] {
                bad.push(format!("ae eta={eta} delta={d_ae}: {} vs {want}", tr.epochs()));
            }
            for d_cl in [0.005, 0.01] {
                let stop = EarlyStop::new(eta, d_cl).unwrap();
                let (_, tr) = train_dec(&ae, x.view(), &y, k, &cfg, &stop).unwrap();
                let want = brute_force_halt(&dec_full.valid, eta, d_cl);
                early += usize::from(want < cfg.max_epochs);
                if tr.epochs() != want || tr.valid[..] != dec_full.valid[..want] {
                    bad.push(format!("cluster eta={eta} delta={d_cl}: {} vs {want}", tr.epochs()));
                }
            }
        }
    }
    Check::new(
        bad.is_empty(),
        if bad.is_empty() {
            format!("12 settings agree, {early} of 18 runs halted before the epoch cap")
        } else {
            bad.join("; ")
        },
        t,
    )
}

// ---- model containers ----

pub struct ModelZoo {
    pub models: Vec<odxu_core::pipeline::Model>,
    /// Latent rows for the models that read the encoder's output.
    pub base: TreeEnsemble,
}

/// One small trained instance of every persisted model type, with all three
/// metamodel variants.
pub fn model_zoo(seed: u64) -> ModelZoo {
    use odxu_core::dec::train_dec;
    use odxu_core::nn::train_fcnn;
    use odxu_core::pipeline::Model;
    use odxu_core::synth::BlobSpec;
    use odxu_core::uq::{build_meta_dataset, train_metamodel, MetaVariant};

    let data = BlobSpec::three_class(40, seed).dataset().unwrap();
    let x = data.features();
    let y: Vec<usize> = data.rows.iter().map(|r| r.label.0 as usize).collect();
    let spec = AutoencoderSpec {
        hidden: vec![16],
        latent_dim: 4,
        ..AutoencoderSpec::default()
    };
    let cfg = TrainConfig {
        max_epochs: 3,
        batch_size: 32,
        seed,
        ..TrainConfig::default()
    };
    let (ae, _) = train_autoencoder(x.view(), &spec, &cfg, &EarlyStop::never()).unwrap();
    let (dec, _) = train_dec(&ae, x.view(), &y, 3, &cfg, &EarlyStop::never()).unwrap();
    let z = dec.transform(x.view()).unwrap();
    let params = BoostParams {
        rounds: 5,
        max_depth: 3,
        seed,
        ..BoostParams::default()
    };
    let clf = train(z.view(), &y, 3, &params).unwrap();
    let (fcnn, _) = train_fcnn(x.view(), &y, 3, &[8, 3], &cfg).unwrap();
    // Rotated labels guarantee errors to learn from.
    let wrong: Vec<usize> = y.iter().enumerate().map(|(i, &l)| if i % 3 == 0 { (l + 1) % 3 } else { l }).collect();
    let bg = z.slice(ndarray::s![..8, ..]).to_owned();
    let mut models = vec![
        Model::Autoencoder(ae),
        Model::Dec(dec),
        Model::Gbdt(clf.clone()),
        Model::Fcnn(fcnn),
    ];
    for v in MetaVariant::ALL {
        let md = build_meta_dataset(&clf, z.view(), &wrong, v, 5.0, seed, (v == MetaVariant::Shap).then(|| bg.view())).unwrap();
        models.push(Model::Metamodel(train_metamodel(&md, &params).unwrap()));
    }
    ModelZoo { models, base: clf }
}

/// Every output a model exposes, flattened, on the given raw and latent rows.
pub fn model_outputs(m: &odxu_core::pipeline::Model, base: &TreeEnsemble, raw: ArrayView2<f64>, latent: ArrayView2<f64>) -> Vec<f64> {
    use odxu_core::pipeline::Model;
    match m {
        Model::Autoencoder(a) => {
            let mut v = a.encode_batch(raw).unwrap().into_raw_vec_and_offset().0;
            v.extend(a.reconstruct_batch(raw).unwrap().iter());
            v
        }
        Model::Dec(d) => {
            let mut v = d.transform(raw).unwrap().into_raw_vec_and_offset().0;
            v.extend(d.soft_assign(raw).unwrap().iter());
            v
        }
        Model::Gbdt(g) => g.predict_proba_batch(latent).unwrap().into_raw_vec_and_offset().0,
        Model::Fcnn(f) => f.predict_proba(raw).unwrap().into_raw_vec_and_offset().0,
        Model::Metamodel(mm) => mm.certainty(base, latent).unwrap(),
    }
}

pub fn container_check(seed: u64) -> Check {
    use odxu_core::pipeline::Model;
    let t = Instant::now();
    let zoo = model_zoo(seed);
    let mut r = rng(seed ^ 0xABCD);
    let raw = Array2::from_shape_simple_fn((100, odxu_core::PAYLOAD_LEN), || r.gen_range(0.0..=1.0));
    let latent = random_matrix(100, 4, &mut r).mapv(|v| v * 3.0);
    let mut failed = Vec::new();
    for m in &zoo.models {
        let bytes = m.to_bytes();
        let back = Model::from_bytes(m.kind(), &bytes).unwrap();
        let a = model_outputs(m, &zoo.base, raw.view(), latent.view());
        let b = model_outputs(&back, &zoo.base, raw.view(), latent.view());
        let same = a.len() == b.len() && a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits());
        if !same || back.to_bytes() != bytes || back != *m {
            failed.push(format!("{:?}", m.kind()));
        }
    }
    Check::new(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} containers identical on 100 inputs", zoo.models.len())
        } else {
            format!("mismatch: {}", failed.join(", "))
        },
        t,
    )
}

// ---- pipeline helpers ----

/// Tiny stage sizes so pipeline tests finish in seconds.
pub fn small_config(seed: u64) -> odxu_core::pipeline::PipelineConfig {
    let mut cfg = odxu_core::pipeline::PipelineConfig::default();
    cfg.autoencoder.spec.hidden = vec![32];
    cfg.autoencoder.spec.latent_dim = 6;
    cfg.autoencoder.train.max_epochs = 5;
    cfg.autoencoder.train.batch_size = 32;
    cfg.cluster.train.max_epochs = 4;
    cfg.cluster.train.batch_size = 32;
    cfg.classifier.rounds = 20;
    cfg.classifier.max_depth = 3;
    cfg.metamodel.params.rounds = 10;
    cfg.fcnn.hidden = vec![16];
    cfg.fcnn.train.max_epochs = 3;
    cfg.transfer.portions = vec![0.25, 0.5];
    cfg.with_seed(seed)
}
