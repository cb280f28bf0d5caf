use rand::Rng;
use serde::{Deserialize, Serialize};

/// Gate slots in the per-gate parameter arrays.
pub const BLOCK: usize = 0;
pub const INPUT: usize = 1;
pub const FORGET: usize = 2;
pub const OUTPUT: usize = 3;

pub(crate) const GATE_SUFFIX: [&str; 4] = ["g", "i", "f", "o"];

/// Weights of a single-layer peephole LSTM with a scalar bottleneck head and an
/// affine reconstruction head.
///
/// Matrices are row-major with one row per hidden unit. Per-gate arrays are
/// indexed by [`BLOCK`], [`INPUT`], [`FORGET`], [`OUTPUT`]; peepholes exist for
/// the input, forget and output gates only (index 0, 1, 2 of `peephole`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub hidden: usize,
    pub input: usize,
    /// `hidden × input` per gate.
    pub w: [Vec<f64>; 4],
    /// `hidden × hidden` per gate.
    pub r: [Vec<f64>; 4],
    pub b: [Vec<f64>; 4],
    /// `p_i`, `p_f`, `p_o`.
    pub peephole: [Vec<f64>; 3],
    /// Bottleneck head `1 × hidden`.
    pub w_z: Vec<f64>,
    pub b_z: f64,
    /// Reconstruction head `input × 1`.
    pub w_rec: Vec<f64>,
    pub b_rec: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let gate = |len: usize| std::array::from_fn(|_| vec![0.0; len]);
        Self {
            hidden,
            input,
            w: gate(hidden * input),
            r: gate(hidden * hidden),
            b: gate(hidden),
            peephole: std::array::from_fn(|_| vec![0.0; hidden]),
            w_z: vec![0.0; hidden],
            b_z: 0.0,
            w_rec: vec![0.0; input],
            b_rec: vec![0.0; input],
        }
    }

    /// Weight matrices uniform in `[-1/sqrt(hidden), 1/sqrt(hidden)]`; biases and peepholes zero.
    pub fn init<R: Rng>(hidden: usize, input: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden, input);
        let k = 1.0 / (hidden as f64).sqrt();
        let mut fill = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = rng.gen_range(-k..=k));
        for g in 0..4 {
            fill(&mut p.w[g]);
            fill(&mut p.r[g]);
        }
        fill(&mut p.w_z);
        fill(&mut p.w_rec);
        p
    }

    /// Every parameter drawn uniformly from `[-scale, scale]`, including biases
    /// and peepholes. Used to exercise every gradient path.
    pub fn random<R: Rng>(hidden: usize, input: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden, input);
        for (_, t) in p.tensors_mut() {
            t.iter_mut().for_each(|x| *x = rng.gen_range(-scale..=scale));
        }
        p
    }

    /// Named views of every tensor in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::with_capacity(20);
        for (g, s) in GATE_SUFFIX.iter().enumerate() {
            out.push((format!("w_{s}"), &self.w[g]));
        }
        for (g, s) in GATE_SUFFIX.iter().enumerate() {
            out.push((format!("r_{s}"), &self.r[g]));
        }
        for (g, s) in GATE_SUFFIX.iter().enumerate() {
            out.push((format!("b_{s}"), &self.b[g]));
        }
        for (k, s) in GATE_SUFFIX[1..].iter().enumerate() {
            out.push((format!("p_{s}"), &self.peephole[k]));
        }
        out.push(("w_z".into(), &self.w_z));
        out.push(("b_z".into(), std::slice::from_ref(&self.b_z)));
        out.push(("w_r".into(), &self.w_rec));
        out.push(("b_r".into(), &self.b_rec));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::with_capacity(20);
        let [wg, wi, wf, wo] = &mut self.w;
        let [rg, ri, rf, ro] = &mut self.r;
        let [bg, bi, bf, bo] = &mut self.b;
        let [pi, pf, po] = &mut self.peephole;
        for (name, t) in [
            ("w_g", wg), ("w_i", wi), ("w_f", wf), ("w_o", wo),
            ("r_g", rg), ("r_i", ri), ("r_f", rf), ("r_o", ro),
            ("b_g", bg), ("b_i", bi), ("b_f", bf), ("b_o", bo),
            ("p_i", pi), ("p_f", pf), ("p_o", po),
        ] {
            out.push((name.to_owned(), t.as_mut_slice()));
        }
        out.push(("w_z".into(), self.w_z.as_mut_slice()));
        out.push(("b_z".into(), std::slice::from_mut(&mut self.b_z)));
        out.push(("w_r".into(), self.w_rec.as_mut_slice()));
        out.push(("b_r".into(), self.b_rec.as_mut_slice()));
        out
    }

    /// Shape of a named tensor as `[rows, cols]`.
    pub fn shape_of(&self, name: &str) -> Option<[usize; 2]> {
        let (y, f) = (self.hidden, self.input);
        Some(match name {
            "w_g" | "w_i" | "w_f" | "w_o" => [y, f],
            "r_g" | "r_i" | "r_f" | "r_o" => [y, y],
            "b_g" | "b_i" | "b_f" | "b_o" | "p_i" | "p_f" | "p_o" => [y, 1],
            "w_z" => [1, y],
            "b_z" => [1, 1],
            "w_r" | "b_r" => [f, 1],
            _ => return None,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    /// Overwrites all parameters from a flat vector in [`LstmParams::flatten`] order.
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_parameters());
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counts_and_order() {
        let p = LstmParams::zeros(3, 7);
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 19);
        assert_eq!(names[0], "w_g");
        assert_eq!(names[14], "p_o");
        assert_eq!(p.num_parameters(), 4 * (21 + 9 + 3) + 9 + 3 + 1 + 14);
        let mut q = p.clone();
        let names_mut: Vec<String> = q.tensors_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, names_mut);
        for (n, t) in p.tensors() {
            let [a, b] = p.shape_of(&n).unwrap();
            assert_eq!(a * b, t.len(), "{n}");
        }
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LstmParams::init(16, 7, &mut rng);
        let k = 0.25;
        assert!(p.w.iter().chain(&p.r).flatten().all(|x| x.abs() <= k));
        assert!(p.b.iter().chain(&p.peephole).flatten().all(|&x| x == 0.0));
        assert_eq!(p.b_z, 0.0);
        assert!(p.w[0].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = LstmParams::random(2, 7, 1.0, &mut rng);
        let mut q = LstmParams::zeros(2, 7);
        q.set_flat(&p.flatten());
        assert_eq!(p, q);
    }
}
