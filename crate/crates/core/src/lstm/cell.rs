use super::params::{LstmParams, BLOCK, FORGET, INPUT, OUTPUT};
use super::LstmError;

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Recurrent state: cell `c` and hidden output `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self { c: vec![0.0; hidden], h: vec![0.0; hidden] }
    }
}

/// Every intermediate of one step, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub input: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub g: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub c: Vec<f64>,
    pub o: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub z: f64,
    pub recon: Vec<f64>,
}

/// `W x + R h + b` for one gate and one unit.
fn affine(p: &LstmParams, gate: usize, unit: usize, x: &[f64], h: &[f64]) -> f64 {
    let (f, y) = (p.input, p.hidden);
    let wx: f64 = p.w[gate][unit * f..(unit + 1) * f].iter().zip(x).map(|(a, b)| a * b).sum();
    let rh: f64 = p.r[gate][unit * y..(unit + 1) * y].iter().zip(h).map(|(a, b)| a * b).sum();
    wx + rh + p.b[gate][unit]
}

pub(crate) fn step_cached(p: &LstmParams, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> StepCache {
    let y = p.hidden;
    let mut g = vec![0.0; y];
    let mut i = vec![0.0; y];
    let mut f = vec![0.0; y];
    let mut c = vec![0.0; y];
    let mut o = vec![0.0; y];
    let mut tanh_c = vec![0.0; y];
    let mut h = vec![0.0; y];
    for u in 0..y {
        g[u] = affine(p, BLOCK, u, x, h_prev).tanh();
        i[u] = sigmoid(affine(p, INPUT, u, x, h_prev) + p.peephole[0][u] * c_prev[u]);
        f[u] = sigmoid(affine(p, FORGET, u, x, h_prev) + p.peephole[1][u] * c_prev[u]);
        c[u] = f[u] * c_prev[u] + i[u] * g[u];
        // the output gate peeks at the updated cell
        o[u] = sigmoid(affine(p, OUTPUT, u, x, h_prev) + p.peephole[2][u] * c[u]);
        tanh_c[u] = c[u].tanh();
        h[u] = tanh_c[u] * o[u];
    }
    let z = p.w_z.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + p.b_z;
    let recon = p.w_rec.iter().zip(&p.b_rec).map(|(w, b)| w * z + b).collect();
    StepCache {
        input: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        g,
        i,
        f,
        c,
        o,
        tanh_c,
        h,
        z,
        recon,
    }
}

fn check_finite(cache: &StepCache, step: usize) -> Result<(), LstmError> {
    let ok = cache.z.is_finite()
        && cache.c.iter().chain(&cache.h).chain(&cache.recon).all(|v| v.is_finite());
    if ok {
        Ok(())
    } else {
        Err(LstmError::NonFiniteStep { step })
    }
}

/// One LSTM step: returns the new state, the bottleneck value `z`, and the reconstruction.
pub fn lstm_step(
    params: &LstmParams,
    state: &LstmState,
    input: &[f64],
) -> Result<(LstmState, f64, Vec<f64>), LstmError> {
    if input.len() != params.input {
        return Err(LstmError::Shape(format!("input has {} features, expected {}", input.len(), params.input)));
    }
    let cache = step_cached(params, &state.h, &state.c, input);
    check_finite(&cache, 0)?;
    Ok((LstmState { c: cache.c, h: cache.h }, cache.z, cache.recon))
}

/// Outputs of a full sequence pass.
#[derive(Debug, Clone)]
pub struct SequenceOutput {
    pub z: Vec<f64>,
    /// `J × input`, row-major.
    pub recon: Vec<f64>,
    pub steps: Vec<StepCache>,
}

/// Runs `series` (`J × input`, row-major) from the zero state.
pub fn forward_sequence(params: &LstmParams, series: &[f64]) -> Result<SequenceOutput, LstmError> {
    let f = params.input;
    if series.is_empty() || series.len() % f != 0 {
        return Err(LstmError::Shape(format!("series length {} is not a positive multiple of {f}", series.len())));
    }
    let mut state = LstmState::zeros(params.hidden);
    let mut steps = Vec::with_capacity(series.len() / f);
    for (t, x) in series.chunks_exact(f).enumerate() {
        let cache = step_cached(params, &state.h, &state.c, x);
        check_finite(&cache, t)?;
        state.h.clone_from(&cache.h);
        state.c.clone_from(&cache.c);
        steps.push(cache);
    }
    Ok(SequenceOutput {
        z: steps.iter().map(|s| s.z).collect(),
        recon: steps.iter().flat_map(|s| s.recon.iter().copied()).collect(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_fixed_point() {
        let p = LstmParams::zeros(4, 7);
        let (s, z, r) = lstm_step(&p, &LstmState::zeros(4), &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0, -4.0]).unwrap();
        assert_eq!(s.c, vec![0.0; 4]);
        assert_eq!(s.h, vec![0.0; 4]);
        assert_eq!(z, 0.0);
        assert_eq!(r, vec![0.0; 7]);
        let cache = step_cached(&p, &[0.0; 4], &[0.0; 4], &[1.0; 7]);
        assert!(cache.i.iter().chain(&cache.f).chain(&cache.o).all(|&v| v == 0.5));
        assert!(cache.g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_hand_evaluation() {
        // y = 1, F = 1, every parameter set to a distinct value
        let mut p = LstmParams::zeros(1, 1);
        let (wg, wi, wf, wo) = (0.7, -0.3, 0.2, 0.5);
        let (rg, ri, rf, ro) = (0.1, 0.4, -0.6, 0.3);
        let (bg, bi, bf, bo) = (0.05, 3.0, -0.2, 0.1);
        let (pi, pf, po) = (0.25, -0.5, 0.8);
        p.w = [vec![wg], vec![wi], vec![wf], vec![wo]];
        p.r = [vec![rg], vec![ri], vec![rf], vec![ro]];
        p.b = [vec![bg], vec![bi], vec![bf], vec![bo]];
        p.peephole = [vec![pi], vec![pf], vec![po]];
        p.w_z = vec![1.5];
        p.b_z = -0.1;
        p.w_rec = vec![2.0];
        p.b_rec = vec![0.3];
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let (x, h0, c0) = (0.9, -0.4, 0.6);
        let g = (wg * x + rg * h0 + bg).tanh();
        let i = s(wi * x + ri * h0 + pi * c0 + bi);
        let f = s(wf * x + rf * h0 + pf * c0 + bf);
        let c = f * c0 + i * g;
        let o = s(wo * x + ro * h0 + po * c + bo);
        let h = c.tanh() * o;
        let z = 1.5 * h - 0.1;
        let (state, got_z, recon) = lstm_step(&p, &LstmState { c: vec![c0], h: vec![h0] }, &[x]).unwrap();
        assert!((state.c[0] - c).abs() < 1e-15);
        assert!((state.h[0] - h).abs() < 1e-15);
        assert!((got_z - z).abs() < 1e-15);
        assert!((recon[0] - (2.0 * z + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn deterministic_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmParams::random(5, 7, 1.0, &mut rng);
        let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let st = LstmState { c: vec![0.3; 5], h: vec![-0.2; 5] };
        let a = lstm_step(&p, &st, &x).unwrap();
        let b = lstm_step(&p, &st, &x).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    #[test]
    fn single_step_sequence_equals_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = LstmParams::random(3, 7, 1.0, &mut rng);
        let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let seq = forward_sequence(&p, &x).unwrap();
        let (_, z, r) = lstm_step(&p, &LstmState::zeros(3), &x).unwrap();
        assert_eq!(seq.z, vec![z]);
        assert_eq!(seq.recon, r);
    }

    #[test]
    fn manual_threading_matches_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = LstmParams::random(4, 7, 0.8, &mut rng);
        let series: Vec<f64> = (0..21).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let seq = forward_sequence(&p, &series).unwrap();
        let mut st = LstmState::zeros(4);
        for t in 0..3 {
            let (next, z, r) = lstm_step(&p, &st, &series[t * 7..(t + 1) * 7]).unwrap();
            assert_eq!(z, seq.z[t]);
            assert_eq!(r, &seq.recon[t * 7..(t + 1) * 7]);
            st = next;
        }
    }

    #[test]
    fn constant_input_without_feedback_gives_constant_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = LstmParams::random(3, 7, 1.0, &mut rng);
        p.r.iter_mut().for_each(|r| r.fill(0.0));
        p.peephole.iter_mut().for_each(|v| v.fill(0.0));
        // with f ≡ 0 the cell holds no memory, so every step sees the same state
        p.b[FORGET].fill(-1e3);
        p.w[FORGET].fill(0.0);
        let x = [0.4, -0.2, 1.0, 0.0, 0.3, -0.7, 0.1];
        let series: Vec<f64> = x.iter().copied().cycle().take(7 * 6).collect();
        let seq = forward_sequence(&p, &series).unwrap();
        for z in &seq.z {
            assert!((z - seq.z[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_ranges_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = LstmParams::random(6, 7, 2.0, &mut rng);
        let series: Vec<f64> = (0..70).map(|_| rng.gen_range(-3.0..3.0)).collect();
        for s in forward_sequence(&p, &series).unwrap().steps {
            for u in 0..6 {
                for gate in [s.i[u], s.f[u], s.o[u]] {
                    assert!(gate > 0.0 && gate < 1.0);
                }
                assert!(s.g[u] > -1.0 && s.g[u] < 1.0);
                assert!(s.h[u] > -1.0 && s.h[u] < 1.0);
            }
        }
    }

    #[test]
    fn non_finite_input_reports_step() {
        let p = LstmParams::zeros(2, 1);
        let mut q = p.clone();
        q.w[BLOCK] = vec![1.0, 1.0];
        q.b[INPUT] = vec![1.0, 1.0];
        let err = forward_sequence(&q, &[0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, LstmError::NonFiniteStep { step: 1 }));
        assert!(forward_sequence(&p, &[]).is_err());
    }
}
