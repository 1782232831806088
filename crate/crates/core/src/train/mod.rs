//! Adversarial autoencoder training: objectives, Adam, and the alternating
//! discriminator / generator loop shared by both stages.

pub mod adam;
pub mod losses;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradients, Graph, Var};
use crate::error::{arg_err, shape_err, Error, Result};
use crate::nn::archive::{load_network, save_network};
use crate::nn::cascade::CascadeBindings;
use crate::nn::network::Bound;
use crate::nn::{LsAae, Network, Sib};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use adam::{adam_step, adam_step_network, AdamConfig, AdamState};
pub use losses::{loss_adv, loss_ae, loss_disc, loss_mse, loss_tv};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub lr: f64,
    pub betas: (f64, f64),
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
    /// Slice interval between quintuplet members.
    pub t: usize,
    pub stage: u8,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { alpha1: 1.0, alpha2: 1e-3, alpha3: 2e-8, lr: 1e-4, betas: (0.9, 0.999), batch: 4, steps: 1000, seed: 0, t: 1, stage: 1 }
    }
}

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value.trim().parse().map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {value:?}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.alpha1, self.alpha2, self.alpha3].iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return arg_err("loss weights must be finite and non-negative");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return arg_err("learning rate must be positive");
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return arg_err("Adam betas must lie in [0, 1)");
        }
        if self.batch == 0 {
            return arg_err("batch size must be >= 1");
        }
        if self.t == 0 {
            return arg_err("image interval T must be >= 1");
        }
        if !matches!(self.stage, 1 | 2) {
            return arg_err(format!("stage must be 1 or 2, got {}", self.stage));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, betas: self.betas, eps: 1e-8 }
    }

    /// Sets one field from its key=value spelling; `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "alpha1" => self.alpha1 = parse(key, value)?,
            "alpha2" => self.alpha2 = parse(key, value)?,
            "alpha3" => self.alpha3 = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "beta1" => self.betas.0 = parse(key, value)?,
            "beta2" => self.betas.1 = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "T" => self.t = parse(key, value)?,
            "stage" => self.stage = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("alpha1", self.alpha1.to_string()),
            ("alpha2", self.alpha2.to_string()),
            ("alpha3", self.alpha3.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.betas.0.to_string()),
            ("beta2", self.betas.1.to_string()),
            ("batch", self.batch.to_string()),
            ("steps", self.steps.to_string()),
            ("seed", self.seed.to_string()),
            ("T", self.t.to_string()),
            ("stage", self.stage.to_string()),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

/// A restoration model trained by [`train_stage`].
pub trait Restorer<T: Scalar> {
    type Bindings;
    /// Number of `[N, 1, H, W]` input slices per sample.
    fn n_inputs(&self) -> usize;
    fn bind(&self, g: &mut Graph<T>, grad: bool, train_bn: bool) -> Self::Bindings;
    fn run(&self, g: &mut Graph<T>, b: &mut Self::Bindings, inputs: &[Var]) -> Result<Var>;
    fn commit(&mut self, b: &Self::Bindings);
    fn networks(&self) -> Vec<&Network<T>>;
    fn networks_mut(&mut self) -> Vec<&mut Network<T>>;
    fn network_grads(&self, b: &Self::Bindings, grads: &Gradients<T>) -> Vec<Vec<Option<Vec<T>>>>;

    /// Inference with running statistics on `[N, 1, H, W]` inputs.
    fn restore(&self, inputs: &[Tensor<T>]) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let mut b = self.bind(&mut g, false, false);
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = self.run(&mut g, &mut b, &vars)?;
        Ok(g.value(out).clone())
    }
}

impl<T: Scalar> Restorer<T> for Network<T> {
    type Bindings = Bound<T>;
    fn n_inputs(&self) -> usize {
        1
    }
    fn bind(&self, g: &mut Graph<T>, grad: bool, train_bn: bool) -> Bound<T> {
        Network::bind(self, g, grad, train_bn)
    }
    fn run(&self, g: &mut Graph<T>, b: &mut Bound<T>, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != 1 {
            return arg_err(format!("{} takes one input, got {}", self.spec().name, inputs.len()));
        }
        self.forward(g, b, inputs[0])
    }
    fn commit(&mut self, b: &Bound<T>) {
        self.commit_stats(b)
    }
    fn networks(&self) -> Vec<&Network<T>> {
        vec![self]
    }
    fn networks_mut(&mut self) -> Vec<&mut Network<T>> {
        vec![self]
    }
    fn network_grads(&self, b: &Bound<T>, grads: &Gradients<T>) -> Vec<Vec<Option<Vec<T>>>> {
        vec![self.grads(b, grads)]
    }
}

impl<T: Scalar> Restorer<T> for LsAae<T> {
    type Bindings = CascadeBindings<T>;
    fn n_inputs(&self) -> usize {
        5
    }
    fn bind(&self, g: &mut Graph<T>, grad: bool, train_bn: bool) -> CascadeBindings<T> {
        LsAae::bind(self, g, grad, train_bn)
    }
    fn run(&self, g: &mut Graph<T>, b: &mut CascadeBindings<T>, inputs: &[Var]) -> Result<Var> {
        Ok(self.forward(g, b, inputs)?.output)
    }
    fn commit(&mut self, b: &CascadeBindings<T>) {
        self.commit_stats(b)
    }
    fn networks(&self) -> Vec<&Network<T>> {
        vec![&self.step1, &self.step2]
    }
    fn networks_mut(&mut self) -> Vec<&mut Network<T>> {
        vec![&mut self.step1, &mut self.step2]
    }
    fn network_grads(&self, b: &CascadeBindings<T>, grads: &Gradients<T>) -> Vec<Vec<Option<Vec<T>>>> {
        vec![self.step1.grads(&b.step1, grads), self.step2.grads(&b.step2, grads)]
    }
}

impl<T: Scalar> Restorer<T> for Sib<T> {
    type Bindings = Bound<T>;
    fn n_inputs(&self) -> usize {
        5
    }
    fn bind(&self, g: &mut Graph<T>, grad: bool, train_bn: bool) -> Bound<T> {
        self.block.bind(g, grad, train_bn)
    }
    fn run(&self, g: &mut Graph<T>, b: &mut Bound<T>, inputs: &[Var]) -> Result<Var> {
        self.forward(g, b, inputs)
    }
    fn commit(&mut self, b: &Bound<T>) {
        self.block.commit_stats(b)
    }
    fn networks(&self) -> Vec<&Network<T>> {
        vec![&self.block]
    }
    fn networks_mut(&mut self) -> Vec<&mut Network<T>> {
        vec![&mut self.block]
    }
    fn network_grads(&self, b: &Bound<T>, grads: &Gradients<T>) -> Vec<Vec<Option<Vec<T>>>> {
        vec![self.block.grads(b, grads)]
    }
}

/// One training example: input slices and the target, each `[1, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T: Scalar> {
    pub inputs: Vec<Tensor<T>>,
    pub target: Tensor<T>,
}

/// Stacks `pick(sample)` of the chosen samples into `[B, 1, H, W]`.
pub fn stack_batch<T: Scalar>(samples: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let d = samples[0].dims().to_vec();
    if samples.iter().any(|s| s.dims() != d.as_slice()) {
        return shape_err("samples in a batch differ in shape");
    }
    let mut dims = vec![samples.len()];
    dims.extend(&d);
    let data = samples.iter().flat_map(|s| s.data().iter().copied()).collect();
    Tensor::new(&dims, data)
}

/// Splits a `[B, ...]` tensor into `B` tensors of the trailing dims.
pub fn unstack<T: Scalar>(t: &Tensor<T>) -> Vec<Tensor<T>> {
    let b = t.dims()[0];
    let rest = t.dims()[1..].to_vec();
    let per = t.len() / b;
    (0..b).map(|i| Tensor::new(&rest, t.data()[i * per..(i + 1) * per].to_vec()).expect("consistent dims")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub l_mse: f64,
    pub l_adv: f64,
    pub l_reg: f64,
    pub l_disc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub trace: Vec<LossRecord>,
    /// Discriminator forward passes made for the generator's adversarial term.
    pub adversarial_evals: usize,
}

/// Deterministic endless stream of shuffled sample indices.
struct Sampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl Sampler {
    fn new(n: usize, seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), order: (0..n).collect(), pos: n }
    }

    fn next_batch(&mut self, b: usize) -> Vec<usize> {
        (0..b)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.order.shuffle(&mut self.rng);
                    self.pos = 0;
                }
                self.pos += 1;
                self.order[self.pos - 1]
            })
            .collect()
    }
}

fn scalar<T: Scalar>(g: &Graph<T>, v: Var) -> f64 {
    g.value(v).data()[0].f64()
}

fn non_finite(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(what) => Error::NonFiniteLoss { step, detail: what },
        other => other,
    }
}

fn check_dataset<T: Scalar, R: Restorer<T>>(model: &R, data: &[Sample<T>]) -> Result<()> {
    if data.is_empty() {
        return arg_err("training set is empty");
    }
    if let Some(s) = data.iter().find(|s| s.inputs.len() != model.n_inputs()) {
        return arg_err(format!("model takes {} inputs, sample has {}", model.n_inputs(), s.inputs.len()));
    }
    Ok(())
}

/// Alternates one discriminator step and one generator step per batch.
pub fn train_stage<T: Scalar, R: Restorer<T>>(
    model: &mut R,
    disc: &mut Network<T>,
    data: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_dataset(model, data)?;
    let adam = cfg.adam();
    let mut g_states: Vec<AdamState<T>> = model.networks().iter().map(|n| AdamState::for_network(n)).collect();
    let mut d_state = AdamState::for_network(disc);
    let mut sampler = Sampler::new(data.len(), cfg.seed);
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut adversarial_evals = 0;
    for step in 0..cfg.steps {
        let idx = sampler.next_batch(cfg.batch);
        let inputs: Vec<Tensor<T>> = (0..model.n_inputs())
            .map(|k| stack_batch(&idx.iter().map(|&i| &data[i].inputs[k]).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        let target = stack_batch(&idx.iter().map(|&i| &data[i].target).collect::<Vec<_>>())?;

        // Generator forward; the graph is extended after the discriminator update.
        let mut g = Graph::new();
        let mut gb = model.bind(&mut g, true, true);
        let in_vars: Vec<Var> = inputs.into_iter().map(|t| g.constant(t)).collect();
        let pred = model.run(&mut g, &mut gb, &in_vars).map_err(non_finite(step))?;
        let gt = g.constant(target.clone());

        // Discriminator step on real targets and the detached prediction.
        let mut dg = Graph::new();
        let mut db = disc.bind(&mut dg, true, true);
        let real = dg.constant(target);
        let fake = dg.constant(g.value(pred).clone());
        let d_real = disc.forward(&mut dg, &mut db, real).map_err(non_finite(step))?;
        let d_fake = disc.forward(&mut dg, &mut db, fake).map_err(non_finite(step))?;
        let l_disc = loss_disc(&mut dg, d_real, d_fake).map_err(non_finite(step))?;
        let dgrads = dg.backward(l_disc)?;
        adam_step_network(disc, &disc.grads(&db, &dgrads), &mut d_state, &adam)?;
        disc.commit_stats(&db);

        // Generator step.
        let mse = loss_mse(&mut g, pred, gt).map_err(non_finite(step))?;
        let reg = loss_tv(&mut g, pred).map_err(non_finite(step))?;
        let adv = if cfg.alpha2 > 0.0 {
            let mut fb = disc.bind(&mut g, false, true);
            let d_out = disc.forward(&mut g, &mut fb, pred).map_err(non_finite(step))?;
            adversarial_evals += 1;
            Some(loss_adv(&mut g, d_out).map_err(non_finite(step))?)
        } else {
            None
        };
        let total = loss_ae(&mut g, mse, adv, reg, cfg).map_err(non_finite(step))?;
        let record = LossRecord {
            step,
            l_mse: scalar(&g, mse),
            l_adv: adv.map(|a| scalar(&g, a)).unwrap_or(0.0),
            l_reg: scalar(&g, reg),
            l_disc: scalar(&dg, l_disc),
        };
        if ![record.l_mse, record.l_adv, record.l_reg, record.l_disc, scalar(&g, total)].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteLoss { step, detail: format!("{record:?}") });
        }
        let grads = g.backward(total)?;
        let per_net = model.network_grads(&gb, &grads);
        for ((net, st), gr) in model.networks_mut().into_iter().zip(&mut g_states).zip(&per_net) {
            adam_step_network(net, gr, st, &adam)?;
        }
        model.commit(&gb);
        trace.push(record);
    }
    Ok(TrainOutcome { trace, adversarial_evals })
}

/// Mean per-pixel squared error of the model over `data` in inference mode.
pub fn evaluate_mse<T: Scalar, R: Restorer<T>>(model: &R, data: &[Sample<T>], batch: usize) -> Result<f64> {
    check_dataset(model, data)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in data.chunks(batch.max(1)) {
        let inputs: Vec<Tensor<T>> = (0..model.n_inputs())
            .map(|k| stack_batch(&chunk.iter().map(|s| &s.inputs[k]).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        let target = stack_batch(&chunk.iter().map(|s| &s.target).collect::<Vec<_>>())?;
        let out = model.restore(&inputs)?;
        total += out.data().iter().zip(target.data()).map(|(a, b)| (a.f64() - b.f64()).powi(2)).sum::<f64>();
        count += target.len();
    }
    Ok(total / count as f64)
}

pub const TRACE_HEADER: &str = "step,l_mse,l_adv,l_reg,l_disc";

pub fn trace_csv(trace: &[LossRecord]) -> String {
    let mut s = format!("{TRACE_HEADER}\n");
    for r in trace {
        let _ = writeln!(s, "{},{},{},{},{}", r.step, r.l_mse, r.l_adv, r.l_reg, r.l_disc);
    }
    s
}

pub const CONFIG_FILE: &str = "config.txt";
pub const DISC_DIR: &str = "discriminator";

fn net_dir(i: usize) -> String {
    format!("net{i}")
}

/// Writes the model's networks, the discriminator and a key=value snapshot.
pub fn save_checkpoint<T: Scalar, R: Restorer<T>>(
    dir: impl AsRef<Path>,
    model: &R,
    disc: Option<&Network<T>>,
    config_text: &str,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, net) in model.networks().into_iter().enumerate() {
        save_network(dir.join(net_dir(i)), net)?;
    }
    if let Some(d) = disc {
        save_network(dir.join(DISC_DIR), d)?;
    }
    fs::write(dir.join(CONFIG_FILE), config_text)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar, R: Restorer<T>>(dir: impl AsRef<Path>, model: &mut R, disc: Option<&mut Network<T>>) -> Result<()> {
    let dir = dir.as_ref();
    for (i, net) in model.networks_mut().into_iter().enumerate() {
        load_network(dir.join(net_dir(i)), net)?;
    }
    if let Some(d) = disc {
        load_network(dir.join(DISC_DIR), d)?;
    }
    Ok(())
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return arg_err(format!("line {}: expected key=value, got {line:?}", n + 1));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_kv() {
        let cfg = TrainConfig { alpha2: 0.0, steps: 7, seed: 42, t: 2, stage: 2, ..Default::default() };
        let mut back = TrainConfig::default();
        for (k, v) in parse_kv(&cfg.to_kv()).unwrap() {
            assert!(back.set(&k, &v).unwrap(), "{k}");
        }
        assert_eq!(back, cfg);
        assert!(!back.set("nope", "1").unwrap());
        assert!(back.set("lr", "abc").is_err());
        assert!(parse_kv("no equals sign").is_err());
    }

    #[test]
    fn default_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.alpha1, c.alpha2, c.alpha3, c.lr), (1.0, 1e-3, 2e-8, 1e-4));
        assert!(c.validate().is_ok());
        assert!(TrainConfig { lr: 0.0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { alpha2: -1.0, ..c }.validate().is_err());
    }

    #[test]
    fn sampler_visits_every_sample_each_epoch() {
        let mut s = Sampler::new(5, 3);
        let mut seen = s.next_batch(5);
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        assert_eq!(Sampler::new(5, 3).next_batch(12), Sampler::new(5, 3).next_batch(12));
    }
}
