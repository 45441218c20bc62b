//! 64-bit verification suites: finite-difference gradient checks for every
//! differentiable op and composite block, plus exact algebraic checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ar::{self, ArConfig, Condition, Variant};
use crate::cfm::{self, DecoderCondition, DitConfig, ExactField, FlowPathConfig};
use crate::conditioner::{init_qformer, qformer_forward, ContentFeatures, QFormerConfig, SpeakerEmbedding};
use crate::error::Result;
use crate::fsq::{index_to_code, token_index, FsqConfig, TokenSequence};
use crate::numerics::gradcheck::{check_inputs, check_params, GradReport};
use crate::numerics::{Graph, ParamStore, Tensor, Var};
use crate::audio::MelSpectrogram;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn from_report(name: &str, r: &GradReport) -> Self {
        Self {
            name: name.to_string(),
            passed: r.passed(),
            detail: match (&r.worst, r.passed()) {
                (Some((label, idx, a, n)), false) => format!(
                    "{} probes, max rel err {:.2e} at {label}[{idx}] (analytic {a:.6e}, numeric {n:.6e})",
                    r.probes, r.max_rel_err
                ),
                _ => format!("{} probes, max rel err {:.2e}", r.probes, r.max_rel_err),
            },
        }
    }
}

type OpFn = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
    Tensor::randn(&[r, c], 1.0, rng)
}

/// `sum(out * W)` with a fixed random `W`, so every output entry matters.
fn readout(g: &mut Graph<f64>, out: Var) -> Result<Var> {
    let dims = g.value(out).dims().to_vec();
    let w = Tensor::randn(&dims, 1.0, &mut ChaCha8Rng::seed_from_u64(dims.iter().product::<usize>() as u64));
    let w = g.constant(w);
    let m = g.mul(out, w)?;
    Ok(g.sum_all(m))
}

fn op_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Vec<Tensor<f64>>, OpFn)> {
    let (r, c) = (10, 12);
    let x = randn(rng, r, c);
    let y = randn(rng, r, c);
    let row = randn(rng, 1, c);
    let sq = randn(rng, c, 9);
    let logits = randn(rng, r, c);
    let mut cases: Vec<(&'static str, Vec<Tensor<f64>>, OpFn)> = vec![
        ("matmul", vec![x.clone(), sq], Box::new(|g, v| { let o = g.matmul(v[0], v[1])?; readout(g, o) })),
        ("add", vec![x.clone(), y.clone()], Box::new(|g, v| { let o = g.add(v[0], v[1])?; readout(g, o) })),
        ("sub", vec![x.clone(), y.clone()], Box::new(|g, v| { let o = g.sub(v[0], v[1])?; readout(g, o) })),
        ("mul", vec![x.clone(), y.clone()], Box::new(|g, v| { let o = g.mul(v[0], v[1])?; readout(g, o) })),
        ("add_row", vec![x.clone(), row.clone()], Box::new(|g, v| { let o = g.add_row(v[0], v[1])?; readout(g, o) })),
        ("mul_row", vec![x.clone(), row.clone()], Box::new(|g, v| { let o = g.mul_row(v[0], v[1])?; readout(g, o) })),
        ("scale", vec![x.clone()], Box::new(|g, v| { let o = g.scale(v[0], -1.7); readout(g, o) })),
        ("exp", vec![x.clone()], Box::new(|g, v| { let o = g.exp(v[0])?; readout(g, o) })),
        ("tanh", vec![x.clone()], Box::new(|g, v| { let o = g.tanh(v[0]); readout(g, o) })),
        ("gelu", vec![x.clone()], Box::new(|g, v| { let o = g.gelu(v[0]); readout(g, o) })),
        ("transpose", vec![x.clone()], Box::new(|g, v| { let o = g.transpose(v[0]); readout(g, o) })),
        ("softmax_rows", vec![logits.clone()], Box::new(|g, v| { let o = g.softmax_rows(v[0])?; readout(g, o) })),
        ("softmax_rows_causal", vec![randn(rng, 11, 11)], Box::new(|g, v| { let o = g.softmax_rows_causal(v[0])?; readout(g, o) })),
        ("log_softmax_rows", vec![logits.clone()], Box::new(|g, v| { let o = g.log_softmax_rows(v[0])?; readout(g, o) })),
        ("layer_norm", vec![x.clone(), row.clone(), randn(rng, 1, c)], Box::new(|g, v| { let o = g.layer_norm(v[0], v[1], v[2], 1e-5)?; readout(g, o) })),
        ("slice_cols", vec![x.clone()], Box::new(|g, v| { let o = g.slice_cols(v[0], 3, 5)?; readout(g, o) })),
        ("slice_rows", vec![x.clone()], Box::new(|g, v| { let o = g.slice_rows(v[0], 2, 6)?; readout(g, o) })),
        ("concat_cols", vec![x.clone(), randn(rng, r, 3)], Box::new(|g, v| { let o = g.concat_cols(&[v[0], v[1]])?; readout(g, o) })),
        ("concat_rows", vec![x.clone(), randn(rng, 2, c)], Box::new(|g, v| { let o = g.concat_rows(&[v[0], v[1]])?; readout(g, o) })),
        ("gather_rows", vec![x.clone()], Box::new(|g, v| { let o = g.gather_rows(v[0], &[3, 0, 3, 9, 1, 1, 7, 2, 5, 4, 6, 8])?; readout(g, o) })),
        ("reshape", vec![x.clone()], Box::new(move |g, v| { let o = g.reshape(v[0], &[c, r])?; readout(g, o) })),
        ("shift_rows", vec![x.clone()], Box::new(|g, v| {
            let a = g.shift_rows(v[0], 1);
            let b = g.shift_rows(v[0], -2);
            let o = g.add(a, b)?;
            readout(g, o)
        })),
        ("mean_rows", vec![x.clone()], Box::new(|g, v| { let o = g.mean_rows(v[0]); readout(g, o) })),
        ("sum_all", vec![x.clone()], Box::new(|g, v| { let o = g.mul(v[0], v[0])?; Ok(g.sum_all(o)) })),
        ("mean_all", vec![x.clone()], Box::new(|g, v| { let o = g.exp(v[0])?; Ok(g.mean_all(o)) })),
        ("square", vec![x.clone()], Box::new(|g, v| { let o = g.square(v[0])?; readout(g, o) })),
        ("mse", vec![x.clone(), y], Box::new(|g, v| g.mse(v[0], v[1]))),
    ];
    let picks: Vec<(usize, usize)> = (0..r).map(|i| (i, (i * 5) % c)).collect();
    cases.push(("nll", vec![logits], Box::new(move |g, v| {
        let lp = g.log_softmax_rows(v[0])?;
        g.nll(lp, &picks)
    })));
    cases
}

/// Randomized finite-difference check of each primitive op, with at least
/// `probes` probes per input tensor (or every entry when smaller).
pub fn op_gradients(probes: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, inputs, f) in op_cases(&mut rng) {
        let report = check_inputs(&inputs, |g, v| f(g, v), probes, &mut rng)?;
        out.push(CheckOutcome::from_report(name, &report));
    }
    out.push(straight_through()?);
    Ok(out)
}

/// Rounding has zero derivative almost everywhere, so the
/// straight-through rule is checked exactly rather than by differences.
fn straight_through() -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = randn(&mut rng, 6, 7);
    let w = randn(&mut rng, 6, 7);
    let mut g = Graph::<f64>::new();
    let xv = g.leaf(x.clone());
    let r = g.round_st(xv);
    let wv = g.constant(w.clone());
    let m = g.mul(r, wv)?;
    let l = g.sum_all(m);
    let grads = g.backward(l)?;
    let rounded_ok = g.value(r).data().iter().zip(x.data()).all(|(a, b)| *a == b.round());
    let grad_ok = grads.get(xv).is_some_and(|d| d == &w);
    Ok(CheckOutcome {
        name: "round_st".into(),
        passed: rounded_ok && grad_ok,
        detail: "forward rounds, backward passes the upstream gradient unchanged".into(),
    })
}

fn jitter(p: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) {
    let names: Vec<String> = p.names().map(str::to_string).collect();
    for n in names {
        let t = p.get_mut(&n).expect("listed name");
        for v in t.data_mut() {
            *v += 0.2 * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
    }
}

/// Parameter and input gradients of the Q-Former, an AR decoder block,
/// the full AR loss, a DiT-lite block and the full DiT-lite forward.
pub fn block_gradients(probes_per_tensor: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let qcfg = QFormerConfig { d_feat: 6, d_model: 8, heads: 2, ff_hidden: 12 };
    let mut qp = ParamStore::<f64>::new();
    init_qformer(&mut qp, "qf", &qcfg, &mut rng);
    jitter(&mut qp, &mut rng);
    let feats = randn(&mut rng, 7, 6);
    let f = feats.clone();
    let mut r = check_params(&qp, |g, p| {
        let x = g.constant(f.clone());
        let o = qformer_forward(g, p, "qf", &qcfg, x)?;
        readout(g, o)
    }, probes_per_tensor, &mut rng)?;
    r.merge(check_inputs(&[feats], |g, v| {
        let o = qformer_forward(g, &qp, "qf", &qcfg, v[0])?;
        readout(g, o)
    }, 42, &mut rng)?);
    out.push(CheckOutcome::from_report("qformer", &r));

    let mut acfg = ArConfig::with_dims(8, 2, 1);
    acfg.qformer = qcfg;
    acfg.qformer.d_model = 8;
    acfg.variant = Variant::Full;
    let mut ap: ParamStore<f64> = ar::init_params(&acfg, seed);
    jitter(&mut ap, &mut rng);
    let h = randn(&mut rng, 9, 8);
    let mut r = check_params(&ap.subset("blk0"), |g, p| {
        let x = g.constant(h.clone());
        let o = ar::decoder_block(g, p, &acfg, "blk0", x)?;
        readout(g, o)
    }, probes_per_tensor, &mut rng)?;
    r.merge(check_inputs(&[h], |g, v| {
        let o = ar::decoder_block(g, &ap, &acfg, "blk0", v[0])?;
        readout(g, o)
    }, 72, &mut rng)?);
    out.push(CheckOutcome::from_report("ar_block", &r));

    let s = SpeakerEmbedding(Tensor::<f32>::randn(&[64], 0.125, &mut rng).into_data());
    let cf = ContentFeatures(Tensor::randn(&[7, 6], 1.0, &mut rng));
    let inp = ar::assemble("ab", &TokenSequence::new(vec![4, 0, 6560]), s.clone(), Condition::Reference(cf), "zh", Some("happy"), Variant::Full)?;
    let r = check_params(&ap, |g, p| ar::teacher_forced_loss(g, p, &acfg, std::slice::from_ref(&inp)), probes_per_tensor, &mut rng)?;
    out.push(CheckOutcome::from_report("ar_loss", &r));

    let mut dcfg = DitConfig::with_dims(8, 2, 1);
    dcfg.n_mels = 5;
    dcfg.d_tok = 4;
    dcfg.codebook = 12;
    let mut dp: ParamStore<f64> = cfm::init_params(&dcfg, seed);
    jitter(&mut dp, &mut rng);
    let x = randn(&mut rng, 8, 8);
    let temb = randn(&mut rng, 1, 8);
    let mut r = check_params(&dp.subset("blk0"), |g, p| {
        let (xv, tv) = (g.constant(x.clone()), g.constant(temb.clone()));
        let o = cfm::dit_block(g, p, &dcfg, "blk0", xv, tv)?;
        readout(g, o)
    }, probes_per_tensor, &mut rng)?;
    r.merge(check_inputs(&[x, temb], |g, v| {
        let o = cfm::dit_block(g, &dp, &dcfg, "blk0", v[0], v[1])?;
        readout(g, o)
    }, 64, &mut rng)?);
    out.push(CheckOutcome::from_report("dit_block", &r));

    let cond = DecoderCondition {
        m_ref: MelSpectrogram::new(3, 5, (0..15).map(|i| -3.0 + 0.2 * i as f32).collect())?,
        s,
        tgt_tokens: TokenSequence::new(vec![3, 11]),
    };
    let noisy = randn(&mut rng, 8, 5);
    let r = check_params(&dp, |g, p| {
        let c = cfm::build_condition_frames(g, p, &cond)?;
        let xv = g.constant(noisy.clone());
        let o = cfm::dit_forward(g, p, &dcfg, xv, 0.37, c)?;
        readout(g, o)
    }, probes_per_tensor, &mut rng)?;
    out.push(CheckOutcome::from_report("dit_forward", &r));
    Ok(out)
}

/// Exhaustive FSQ id round trip over the whole codebook.
pub fn fsq_roundtrip() -> Result<CheckOutcome> {
    let cfg = FsqConfig::default();
    let size = cfg.codebook_size();
    let mut ok = size == 6561;
    for id in 0..size as u32 {
        ok &= token_index(&index_to_code(id, &cfg)?, &cfg)? == id;
    }
    Ok(CheckOutcome {
        name: "fsq_roundtrip".into(),
        passed: ok,
        detail: format!("{size} codes"),
    })
}

/// One Euler step along the exact field with `sigma_min = 0`.
pub fn flow_one_step() -> Result<CheckOutcome> {
    let x1: Tensor<f64> = cfm::initial_noise(16, 8, 1);
    let stub = ExactField { x1: x1.clone(), sigma_min: 0.0 };
    let mut worst = 0.0f64;
    for seed in 0..8 {
        let out = cfm::euler_exact(&stub, &cfm::initial_noise(16, 8, 100 + seed), FlowPathConfig { sigma_min: 0.0, steps: 1 }.steps)?;
        worst = worst.max(out.max_abs_diff(&x1));
    }
    Ok(CheckOutcome {
        name: "flow_one_step".into(),
        passed: worst < 1e-10,
        detail: format!("max |x - x1| {worst:.1e}"),
    })
}

/// All suites, as run by `ptts selfcheck`.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = op_gradients(100, seed)?;
    out.extend(block_gradients(6, seed)?);
    out.push(fsq_roundtrip()?);
    out.push(flow_one_step()?);
    Ok(out)
}
