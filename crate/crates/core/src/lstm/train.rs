use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::backward::{backward_into, mse_grad};
use super::cell::forward_sequence;
use super::params::LstmParams;
use super::LstmError;
use crate::ingest::QuarterId;
use crate::ratios::{Feature, RatioTensor};
use crate::table::{Table, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            hidden: 64,
            epochs: 12,
            batch_size: 16,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LstmError> {
        let bad = |msg: &str| Err(LstmError::Config(msg.to_owned()));
        if self.hidden == 0 {
            return bad("hidden size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("Adam decays must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: LstmParams,
    /// Mean squared reconstruction error per epoch, averaged over every cell seen.
    pub loss_history: Vec<f64>,
}

/// Trains on per-company sequences (`J × input` each, row-major).
///
/// Companies are reshuffled every epoch by a generator seeded from
/// `config.seed`; the final partial batch is trained as well.
pub fn train_series(series: &[Vec<f64>], input: usize, config: &TrainConfig) -> Result<TrainOutcome, LstmError> {
    config.validate()?;
    if series.is_empty() {
        return Err(LstmError::Shape("no sequences to train on".into()));
    }
    let len = series[0].len();
    if len == 0 || len % input != 0 || series.iter().any(|s| s.len() != len) {
        return Err(LstmError::Shape("sequences must share one positive length divisible by the input size".into()));
    }
    if series.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LstmError::Shape("training data contains non-finite values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = LstmParams::init(config.hidden, input, &mut rng);
    let mut adam = Adam::new(params.num_parameters(), config.adam());
    let mut order: Vec<usize> = (0..series.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut company_sse = vec![0.0; series.len()];
        for (batch, members) in order.chunks(config.batch_size).enumerate() {
            let denom = (members.len() * len) as f64;
            let mut grads = LstmParams::zeros(params.hidden, input);
            let mut sse = 0.0;
            for &c in members {
                let out = forward_sequence(&params, &series[c])
                    .map_err(|_| LstmError::NonFiniteLoss { epoch, batch })?;
                company_sse[c] = series[c].iter().zip(&out.recon).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                sse += company_sse[c];
                let d = mse_grad(&series[c], &out.recon, denom);
                backward_into(&params, &out.steps, &d, &mut grads);
            }
            if !sse.is_finite() || !grads.is_finite() {
                return Err(LstmError::NonFiniteLoss { epoch, batch });
            }
            adam.step(&mut params, &grads);
        }
        // summed in company order so the value does not depend on the shuffle
        history.push(company_sse.iter().sum::<f64>() / (series.len() * len) as f64);
    }
    Ok(TrainOutcome { params, loss_history: history })
}

fn tensor_series(tensor: &RatioTensor) -> Vec<Vec<f64>> {
    (0..tensor.n_companies()).map(|c| tensor.company_rows(c).to_vec()).collect()
}

pub fn train(tensor: &RatioTensor, config: &TrainConfig) -> Result<TrainOutcome, LstmError> {
    train_series(&tensor_series(tensor), Feature::COUNT, config)
}

/// Latent value per company and period.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSeries {
    pub companies: Vec<String>,
    pub periods: Vec<QuarterId>,
    /// `N × J`, row-major by company.
    pub z: Vec<f64>,
}

impl LatentSeries {
    pub fn new(companies: Vec<String>, periods: Vec<QuarterId>, series: &[Vec<f64>]) -> Self {
        assert_eq!(series.len(), companies.len());
        assert!(series.iter().all(|s| s.len() == periods.len()));
        Self { companies, periods, z: series.concat() }
    }

    pub fn n_companies(&self) -> usize {
        self.companies.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn series(&self, company: usize) -> &[f64] {
        let j = self.n_periods();
        &self.z[company * j..(company + 1) * j]
    }

    pub fn to_series(&self) -> Vec<Vec<f64>> {
        (0..self.n_companies()).map(|c| self.series(c).to_vec()).collect()
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["company", "period", "z"]);
        for (c, name) in self.companies.iter().enumerate() {
            for (p, period) in self.periods.iter().enumerate() {
                t.push(vec![name.as_str().into(), period.to_string().into(), Value::Float(self.series(c)[p])]);
            }
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<Self, LstmError> {
        let (ci, pi, zi) = (t.column("company")?, t.column("period")?, t.column("z")?);
        let mut companies: Vec<String> = Vec::new();
        let mut periods: Vec<QuarterId> = Vec::new();
        let mut z = Vec::with_capacity(t.len());
        for r in 0..t.len() {
            let company = t.text(r, ci);
            if companies.last() != Some(&company) {
                companies.push(company);
            }
            if companies.len() == 1 {
                let q = t.text(r, pi).parse().map_err(|e: String| LstmError::Shape(e))?;
                periods.push(q);
            }
            z.push(t.float(r, zi)?);
        }
        if companies.is_empty() || z.len() != companies.len() * periods.len() {
            return Err(LstmError::Shape("latent table is not rectangular".into()));
        }
        Ok(Self { companies, periods, z })
    }
}

/// Bottleneck outputs for each sequence, computed in parallel.
pub fn encode_series(params: &LstmParams, series: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, LstmError> {
    series.par_iter().map(|s| forward_sequence(params, s).map(|o| o.z)).collect()
}

pub fn encode(params: &LstmParams, tensor: &RatioTensor) -> Result<LatentSeries, LstmError> {
    if params.input != Feature::COUNT {
        return Err(LstmError::Shape(format!("model expects {} features", params.input)));
    }
    let z = encode_series(params, &tensor_series(tensor))?;
    Ok(LatentSeries::new(tensor.companies.clone(), tensor.periods.clone(), &z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Versioned parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub hidden: usize,
    pub input: usize,
    pub config: TrainConfig,
    pub loss_history: Vec<f64>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(params: &LstmParams, config: &TrainConfig, loss_history: &[f64]) -> Self {
        let tensors = params
            .tensors()
            .into_iter()
            .map(|(name, data)| NamedTensor {
                shape: params.shape_of(&name).expect("known tensor"),
                name,
                data: data.to_vec(),
            })
            .collect();
        Self {
            format_version: Self::FORMAT_VERSION,
            hidden: params.hidden,
            input: params.input,
            config: config.clone(),
            loss_history: loss_history.to_vec(),
            tensors,
        }
    }

    pub fn params(&self) -> Result<LstmParams, LstmError> {
        if self.format_version != Self::FORMAT_VERSION {
            return Err(LstmError::Checkpoint(format!("unsupported format version {}", self.format_version)));
        }
        let mut p = LstmParams::zeros(self.hidden, self.input);
        let expected = p.tensors().len();
        if self.tensors.len() != expected {
            return Err(LstmError::Checkpoint(format!("{} tensors, expected {expected}", self.tensors.len())));
        }
        let shapes: Vec<[usize; 2]> =
            p.tensors().iter().map(|(n, _)| p.shape_of(n).expect("known tensor")).collect();
        for ((name, slot), (stored, shape)) in p.tensors_mut().into_iter().zip(self.tensors.iter().zip(shapes)) {
            if stored.name != name || stored.shape != shape || stored.data.len() != slot.len() {
                return Err(LstmError::Checkpoint(format!("tensor `{}` does not match `{name}` {shape:?}", stored.name)));
            }
            slot.copy_from_slice(&stored.data);
        }
        if !p.is_finite() {
            return Err(LstmError::Checkpoint("non-finite parameter".into()));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, LstmError> {
        serde_json::from_str(text).map_err(|e| LstmError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_series(n: usize, j: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|c| (0..j * 7).map(|k| ((k + 3 * c) as f64 * 0.37).sin()).collect())
            .collect()
    }

    #[test]
    fn history_length_and_determinism() {
        let cfg = TrainConfig { hidden: 4, epochs: 3, batch_size: 2, seed: 5, ..TrainConfig::default() };
        let data = toy_series(5, 4);
        let a = train_series(&data, 7, &cfg).unwrap();
        let b = train_series(&data, 7, &cfg).unwrap();
        assert_eq!(a.loss_history.len(), 3);
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn zero_learning_rate_freezes_everything() {
        let cfg = TrainConfig { hidden: 3, epochs: 4, batch_size: 2, learning_rate: 0.0, seed: 1, ..TrainConfig::default() };
        let data = toy_series(3, 5);
        let out = train_series(&data, 7, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(out.params, LstmParams::init(3, 7, &mut rng));
        assert!(out.loss_history.iter().all(|&l| l == out.loss_history[0]));
    }

    #[test]
    fn invalid_config_rejected() {
        let data = toy_series(2, 2);
        for cfg in [
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: -1.0, ..TrainConfig::default() },
        ] {
            assert!(matches!(train_series(&data, 7, &cfg), Err(LstmError::Config(_))));
        }
    }

    #[test]
    fn default_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.hidden, c.epochs, c.batch_size), (64, 12, 16));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = LstmParams::random(3, 7, 1.0, &mut rng);
        let ck = Checkpoint::new(&p, &TrainConfig::default(), &[1.0, 0.5]);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back.params().unwrap(), p);
        let mut broken = back.clone();
        broken.tensors[2].shape = [1, 1];
        assert!(broken.params().is_err());
    }

    #[test]
    fn encode_identical_companies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LstmParams::random(4, 7, 0.5, &mut rng);
        let s = toy_series(1, 6).remove(0);
        let z = encode_series(&p, &[s.clone(), s]).unwrap();
        assert_eq!(z[0], z[1]);
        let twice: Vec<Vec<f64>> = toy_series(1, 6).into_iter().cycle().take(2).collect();
        assert_eq!(z, encode_series(&p, &twice).unwrap());
    }

    #[test]
    fn latent_table_round_trip() {
        let start = QuarterId::new(2013, 1).unwrap();
        let l = LatentSeries::new(
            vec!["A".into(), "B".into()],
            QuarterId::span(start, start.offset(2)),
            &[vec![0.1, 0.2, 0.3], vec![-1.0, 0.0, 1.0]],
        );
        assert_eq!(LatentSeries::from_table(&l.to_table()).unwrap(), l);
        assert_eq!(l.to_table().len(), 6);
    }
}
