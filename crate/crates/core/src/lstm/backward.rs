use super::cell::StepCache;
use super::params::{LstmParams, BLOCK, FORGET, INPUT, OUTPUT};
use super::LstmError;

/// Mean squared error over all elements.
pub fn mse_loss(target: &[f64], recon: &[f64]) -> Result<f64, LstmError> {
    if target.len() != recon.len() {
        return Err(LstmError::Shape(format!("loss operands differ: {} vs {}", target.len(), recon.len())));
    }
    if target.is_empty() {
        return Ok(0.0);
    }
    let sse: f64 = target.iter().zip(recon).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sse / target.len() as f64)
}

/// Gradient of `sum((recon - target)^2) / denom` with respect to `recon`.
pub fn mse_grad(target: &[f64], recon: &[f64], denom: f64) -> Vec<f64> {
    target.iter().zip(recon).map(|(a, b)| 2.0 * (b - a) / denom).collect()
}

/// Backpropagation through time for one sequence.
///
/// `d_recon` holds `∂loss/∂recon` for every step (`J × input`, row-major).
/// Gradients are added into `grads`, so a batch can accumulate in place.
pub fn backward_into(params: &LstmParams, steps: &[StepCache], d_recon: &[f64], grads: &mut LstmParams) {
    let (y, nf) = (params.hidden, params.input);
    debug_assert_eq!(d_recon.len(), steps.len() * nf);
    let mut dh_next = vec![0.0; y];
    let mut dc_next = vec![0.0; y];
    let mut da = [vec![0.0; y], vec![0.0; y], vec![0.0; y], vec![0.0; y]];
    for (t, s) in steps.iter().enumerate().rev() {
        let dr = &d_recon[t * nf..(t + 1) * nf];
        let mut dz = 0.0;
        for k in 0..nf {
            grads.w_rec[k] += dr[k] * s.z;
            grads.b_rec[k] += dr[k];
            dz += params.w_rec[k] * dr[k];
        }
        grads.b_z += dz;
        let mut dc_prev = vec![0.0; y];
        for u in 0..y {
            grads.w_z[u] += dz * s.h[u];
            let dh = params.w_z[u] * dz + dh_next[u];
            let d_o = dh * s.tanh_c[u];
            let da_o = d_o * s.o[u] * (1.0 - s.o[u]);
            let mut dc = dc_next[u] + dh * s.o[u] * (1.0 - s.tanh_c[u] * s.tanh_c[u]);
            dc += da_o * params.peephole[2][u];
            grads.peephole[2][u] += da_o * s.c[u];

            let da_f = dc * s.c_prev[u] * s.f[u] * (1.0 - s.f[u]);
            let da_i = dc * s.g[u] * s.i[u] * (1.0 - s.i[u]);
            let da_g = dc * s.i[u] * (1.0 - s.g[u] * s.g[u]);

            grads.peephole[0][u] += da_i * s.c_prev[u];
            grads.peephole[1][u] += da_f * s.c_prev[u];
            dc_prev[u] = dc * s.f[u] + da_i * params.peephole[0][u] + da_f * params.peephole[1][u];

            da[BLOCK][u] = da_g;
            da[INPUT][u] = da_i;
            da[FORGET][u] = da_f;
            da[OUTPUT][u] = da_o;
        }
        let mut dh_prev = vec![0.0; y];
        for gate in 0..4 {
            let (w, r, b) = (&mut grads.w[gate], &mut grads.r[gate], &mut grads.b[gate]);
            for u in 0..y {
                let d = da[gate][u];
                if d == 0.0 {
                    continue;
                }
                b[u] += d;
                for (k, x) in s.input.iter().enumerate() {
                    w[u * nf + k] += d * x;
                }
                let r_row = &params.r[gate][u * y..(u + 1) * y];
                for v in 0..y {
                    r[u * y + v] += d * s.h_prev[v];
                    dh_prev[v] += r_row[v] * d;
                }
            }
        }
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
}

/// Parameter gradients of one sequence given `∂loss/∂recon`.
pub fn backward_sequence(params: &LstmParams, steps: &[StepCache], d_recon: &[f64]) -> LstmParams {
    let mut grads = LstmParams::zeros(params.hidden, params.input);
    backward_into(params, steps, d_recon, &mut grads);
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::cell::forward_sequence;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_cases() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0; 6], &[2.0; 6]).unwrap(), 4.0);
        assert!(mse_loss(&[0.0; 2], &[0.0; 3]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Vec<f64> = (0..35).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..35).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut total = 0.0;
        for k in 0..35 {
            total += (a[k] - b[k]).powi(2);
        }
        assert!((mse_loss(&a, &b).unwrap() - total / 35.0).abs() < 1e-15);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = LstmParams::random(3, 7, 1.0, &mut rng);
        let series: Vec<f64> = (0..28).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = forward_sequence(&p, &series).unwrap();
        let g = mse_grad(&out.recon, &out.recon, 28.0);
        let grads = backward_sequence(&p, &out.steps, &g);
        assert!(grads.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_z_gradient_is_sum_of_dz() {
        // y = 1: ∂L/∂b_z = Σ_t ∂L/∂z_t = Σ_t Σ_k w_r[k] ∂L/∂r̂_tk
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = LstmParams::random(1, 7, 1.0, &mut rng);
        let series: Vec<f64> = (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = forward_sequence(&p, &series).unwrap();
        let d = mse_grad(&series, &out.recon, 21.0);
        let grads = backward_sequence(&p, &out.steps, &d);
        let expected: f64 = d.chunks(7).map(|row| row.iter().zip(&p.w_rec).map(|(a, b)| a * b).sum::<f64>()).sum();
        assert!((grads.b_z - expected).abs() < 1e-14);
    }
}
