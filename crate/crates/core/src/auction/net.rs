use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::{AllocationMatrix, BidMatrix, Deviation, DeviationEval, Mechanism, Outcome, PaymentVector};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::quantum::QuantumLayer;
use crate::rng::{self, Purpose};

/// Hidden stack flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// LSTM encoder and one dense relu layer.
    Dla,
    /// LSTM encoder, relu dense to `qubits`, quantum layer, relu dense to `hidden_size`.
    Qdla,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub variant: Variant,
    pub n_buyers: usize,
    pub n_items: usize,
    pub lstm_size: usize,
    pub hidden_size: usize,
    pub qubits: usize,
    pub layers: usize,
    pub lr: f64,
}

/// Upper bound on buyers and items.
pub const MAX_AGENTS: usize = 10;

impl NetConfig {
    /// LSTM 32, hidden 32, learning rate 0.001.
    pub fn dla(n_buyers: usize, n_items: usize) -> Self {
        Self {
            variant: Variant::Dla,
            n_buyers,
            n_items,
            lstm_size: 32,
            hidden_size: 32,
            qubits: 4,
            layers: 6,
            lr: 0.001,
        }
    }

    /// LSTM 4, hidden 16, 4 qubits, 6 entangler layers, learning rate 0.01.
    pub fn qdla(n_buyers: usize, n_items: usize) -> Self {
        Self {
            variant: Variant::Qdla,
            n_buyers,
            n_items,
            lstm_size: 4,
            hidden_size: 16,
            qubits: 4,
            layers: 6,
            lr: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(1..=MAX_AGENTS).contains(&self.n_buyers) {
            bad.push(format!("n_buyers={} (1..={MAX_AGENTS})", self.n_buyers));
        }
        if !(1..=MAX_AGENTS).contains(&self.n_items) {
            bad.push(format!("n_items={} (1..={MAX_AGENTS})", self.n_items));
        }
        if self.lstm_size == 0 {
            bad.push("lstm_size=0".into());
        }
        if self.hidden_size == 0 {
            bad.push("hidden_size=0".into());
        }
        if self.variant == Variant::Qdla {
            if !(1..=crate::quantum::MAX_QUBITS).contains(&self.qubits) {
                bad.push(format!("qubits={}", self.qubits));
            }
            if self.layers == 0 {
                bad.push("layers=0".into());
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            bad.push(format!("lr={}", self.lr));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("net config: {}", bad.join(", "))))
        }
    }

    fn param_layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (n, m, h) = (self.n_buyers, self.n_items, self.lstm_size);
        let mut layout = vec![
            ("lstm.w_input", vec![n, 4 * h]),
            ("lstm.w_hidden", vec![h, 4 * h]),
            ("lstm.bias", vec![1, 4 * h]),
        ];
        match self.variant {
            Variant::Dla => {
                layout.push(("hidden.weight", vec![h, self.hidden_size]));
                layout.push(("hidden.bias", vec![1, self.hidden_size]));
            }
            Variant::Qdla => {
                layout.push(("pre_quantum.weight", vec![h, self.qubits]));
                layout.push(("pre_quantum.bias", vec![1, self.qubits]));
                layout.push(("quantum.weight", vec![self.layers, self.qubits]));
                layout.push(("post_quantum.weight", vec![self.qubits, self.hidden_size]));
                layout.push(("post_quantum.bias", vec![1, self.hidden_size]));
            }
        }
        layout.push(("allocation.weight", vec![self.hidden_size, (n + 1) * m]));
        layout.push(("allocation.bias", vec![1, (n + 1) * m]));
        layout.push(("payment.weight", vec![self.hidden_size, n]));
        layout.push(("payment.bias", vec![1, n]));
        layout
    }
}

/// Tape handles for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct NetOutput {
    /// `[rows, (n + 1) * m]`, row-major `(n + 1) x m` per profile.
    pub allocation: Var,
    /// `[rows, n]`.
    pub payments: Var,
}

/// The learned mechanism: LSTM bid encoder, hidden stack, allocation and
/// payment heads.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionNet {
    config: NetConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
}

/// Rows per tape when evaluating large batches.
const EVAL_CHUNK: usize = 1024;

impl AuctionNet {
    /// Weights `U(+-1/sqrt(fan_in))`, biases 0 except the LSTM forget gate
    /// (1.0), circuit angles `U[0, 2pi)`.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, Purpose::Init, 0, 0);
        let h = config.lstm_size;
        let mut names = Vec::new();
        let mut params = Vec::new();
        for (name, shape) in config.param_layout() {
            let len: usize = shape.iter().product();
            let data: Vec<f64> = if name == "quantum.weight" {
                (0..len).map(|_| rng.gen::<f64>() * std::f64::consts::TAU).collect()
            } else if name == "lstm.bias" {
                (0..len).map(|k| if (h..2 * h).contains(&k) { 1.0 } else { 0.0 }).collect()
            } else if name.ends_with("bias") {
                vec![0.0; len]
            } else {
                let fan_in = if name.starts_with("lstm") {
                    config.n_buyers + h
                } else {
                    shape[0]
                };
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
            };
            names.push(name.to_string());
            params.push(Tensor::new(shape, data)?);
        }
        Ok(Self { config, names, params })
    }

    /// All parameters zero, including the forget-gate bias.
    pub fn zeroed(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let (names, params) = config
            .param_layout()
            .into_iter()
            .map(|(name, shape)| (name.to_string(), Tensor::zeros(&shape)))
            .unzip();
        Ok(Self { config, names, params })
    }

    /// Rebuilds a network from named tensors in layout order.
    pub fn from_params(config: NetConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let layout = config.param_layout();
        if layout.len() != named.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                named.len()
            )));
        }
        for ((name, shape), (got_name, t)) in layout.iter().zip(&named) {
            if name != got_name || shape.as_slice() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {got_name} {:?} does not match {name} {shape:?}",
                    t.shape()
                )));
            }
            t.check_finite(got_name)?;
        }
        let (names, params) = named.into_iter().unzip();
        Ok(Self { config, names, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    /// Registers every parameter on `tape`, trainable or constant.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if trainable { tape.leaf(p.clone()) } else { tape.constant(p.clone()) })
            .collect()
    }

    /// Stacks profiles into a `[rows, n * m]` tensor.
    pub fn bids_tensor(&self, profiles: &[BidMatrix]) -> Result<Tensor> {
        let nm = self.config.n_buyers * self.config.n_items;
        let mut data = Vec::with_capacity(profiles.len() * nm);
        for p in profiles {
            self.check_profile(p)?;
            data.extend_from_slice(p.as_slice());
        }
        Tensor::new(vec![profiles.len(), nm], data)
    }

    /// LSTM over the items: timestep `j` reads the `n` bids for item `j`.
    /// Returns the final hidden state, `[rows, lstm_size]`.
    pub fn encode_on_tape(&self, tape: &mut Tape, params: &[Var], bids: Var) -> Result<Var> {
        let (n, m, h) = (self.config.n_buyers, self.config.n_items, self.config.lstm_size);
        let rows = tape.value(bids).rows();
        let (w_in, w_hid, bias) = (params[0], params[1], params[2]);
        let mut state: Option<(Var, Var)> = None;
        for j in 0..m {
            let index: Vec<usize> = (0..rows)
                .flat_map(|r| (0..n).map(move |i| r * n * m + i * m + j))
                .collect();
            let x = tape.gather(bids, index, &[rows, n])?;
            let mut gates = tape.matmul(x, w_in)?;
            if let Some((hp, _)) = state {
                let rec = tape.matmul(hp, w_hid)?;
                gates = tape.add(gates, rec)?;
            }
            let gates = tape.add_bias(gates, bias)?;
            let i_pre = tape.slice_cols(gates, 0, h)?;
            let f_pre = tape.slice_cols(gates, h, h)?;
            let g_pre = tape.slice_cols(gates, 2 * h, h)?;
            let o_pre = tape.slice_cols(gates, 3 * h, h)?;
            let i_gate = tape.sigmoid(i_pre);
            let f_gate = tape.sigmoid(f_pre);
            let g_cand = tape.tanh(g_pre);
            let o_gate = tape.sigmoid(o_pre);
            let mut c = tape.mul(i_gate, g_cand)?;
            if let Some((_, cp)) = state {
                let kept = tape.mul(f_gate, cp)?;
                c = tape.add(c, kept)?;
            }
            let tc = tape.tanh(c);
            let hn = tape.mul(o_gate, tc)?;
            state = Some((hn, c));
        }
        Ok(state.expect("at least one item").0)
    }

    pub fn forward_on_tape(&self, tape: &mut Tape, params: &[Var], bids: Var) -> Result<NetOutput> {
        let (n, m) = (self.config.n_buyers, self.config.n_items);
        let rows = tape.value(bids).rows();
        let features = self.encode_on_tape(tape, params, bids)?;
        let (hidden, next) = match self.config.variant {
            Variant::Dla => {
                let a = tape.affine(features, params[3], params[4])?;
                (tape.relu(a), 5)
            }
            Variant::Qdla => {
                let a = tape.affine(features, params[3], params[4])?;
                let a = tape.relu(a);
                let layer = QuantumLayer::new(self.config.qubits, self.config.layers)?;
                let qo = layer.record(tape, a, params[5])?;
                let b = tape.affine(qo, params[6], params[7])?;
                (tape.relu(b), 8)
            }
        };
        let logits = tape.affine(hidden, params[next], params[next + 1])?;
        let logits = tape.reshape(logits, &[rows, n + 1, m])?;
        let alloc = tape.softmax_columns(logits)?;
        let allocation = tape.reshape(alloc, &[rows, (n + 1) * m])?;

        let pay_logits = tape.affine(hidden, params[next + 2], params[next + 3])?;
        let fraction = tape.sigmoid(pay_logits);
        let reported = allocated_value(tape, allocation, bids, n, m)?;
        let payments = tape.mul(fraction, reported)?;
        Ok(NetOutput { allocation, payments })
    }

    /// Final LSTM hidden state for one profile.
    pub fn encode_bids(&self, bids: &BidMatrix) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let b = tape.constant(self.bids_tensor(std::slice::from_ref(bids))?);
        let h = self.encode_on_tape(&mut tape, &vars, b)?;
        Ok(tape.value(h).data().to_vec())
    }

    fn outcomes_from(&self, tape: &Tape, out: NetOutput) -> Result<Vec<Outcome>> {
        let (n, m) = (self.config.n_buyers, self.config.n_items);
        let z = tape.value(out.allocation);
        let p = tape.value(out.payments);
        z.data()
            .chunks((n + 1) * m)
            .zip(p.data().chunks(n))
            .map(|(zc, pc)| {
                Ok(Outcome {
                    allocation: AllocationMatrix::new(n, m, zc.to_vec())?,
                    payments: PaymentVector(pc.to_vec()),
                })
            })
            .collect()
    }
}

/// `sum_j z[i][j] * x[i][j]` for every buyer: `[rows, n]`.
pub(crate) fn allocated_value(tape: &mut Tape, allocation: Var, x: Var, n: usize, m: usize) -> Result<Var> {
    let rows = tape.value(allocation).rows();
    let z = tape.slice_cols(allocation, 0, n * m)?;
    let zx = tape.mul(z, x)?;
    let zx = tape.reshape(zx, &[rows, n, m])?;
    let v = tape.sum_last(zx);
    tape.reshape(v, &[rows, n])
}

impl Mechanism for AuctionNet {
    fn name(&self) -> &str {
        match self.config.variant {
            Variant::Dla => "dla",
            Variant::Qdla => "qdla",
        }
    }

    fn n_buyers(&self) -> usize {
        self.config.n_buyers
    }

    fn n_items(&self) -> usize {
        self.config.n_items
    }

    fn run_batch(&self, profiles: &[BidMatrix]) -> Result<Vec<Outcome>> {
        let mut outcomes = Vec::with_capacity(profiles.len());
        for chunk in profiles.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new();
            let vars = self.register(&mut tape, false);
            let bids = tape.constant(self.bids_tensor(chunk)?);
            let out = self.forward_on_tape(&mut tape, &vars, bids)?;
            outcomes.extend(self.outcomes_from(&tape, out)?);
        }
        Ok(outcomes)
    }

    fn deviation_gradients(&self, deviations: &[Deviation]) -> Option<Result<Vec<DeviationEval>>> {
        Some(self.deviation_gradients_impl(deviations))
    }
}

impl AuctionNet {
    fn deviation_gradients_impl(&self, deviations: &[Deviation]) -> Result<Vec<DeviationEval>> {
        let (n, m) = (self.config.n_buyers, self.config.n_items);
        let mut evals = Vec::with_capacity(deviations.len());
        for chunk in deviations.chunks(EVAL_CHUNK) {
            let rows = chunk.len();
            let profiles: Vec<BidMatrix> = chunk.iter().map(|d| d.reported.clone()).collect();
            // true values of the deviator on its own row, zero elsewhere
            let mut weights = vec![0.0; rows * n * m];
            let mut pay_mask = vec![0.0; rows * n];
            for (r, d) in chunk.iter().enumerate() {
                if d.buyer >= n || d.values.len() != m {
                    return Err(Error::InvalidInput(format!(
                        "deviation by buyer {} with {} values",
                        d.buyer,
                        d.values.len()
                    )));
                }
                weights[r * n * m + d.buyer * m..r * n * m + (d.buyer + 1) * m].copy_from_slice(&d.values);
                pay_mask[r * n + d.buyer] = 1.0;
            }
            let mut tape = Tape::new();
            let vars = self.register(&mut tape, false);
            let bids = tape.leaf(self.bids_tensor(&profiles)?);
            let out = self.forward_on_tape(&mut tape, &vars, bids)?;
            let w = tape.constant(Tensor::new(vec![rows, n * m], weights)?);
            let mask = tape.constant(Tensor::new(vec![rows, n], pay_mask)?);
            let value = allocated_value(&mut tape, out.allocation, w, n, m)?;
            let value = tape.sum_last(value);
            let paid = tape.mul(out.payments, mask)?;
            let paid = tape.sum_last(paid);
            let utility = tape.sub(value, paid)?;
            let total = tape.sum(utility);
            let grads = tape.backward(total)?;
            let g = grads.get(bids).expect("bids are trainable");
            let u = tape.value(utility).data();
            for (r, d) in chunk.iter().enumerate() {
                let start = r * n * m + d.buyer * m;
                evals.push(DeviationEval {
                    utility: u[r],
                    gradient: g.data()[start..start + m].to_vec(),
                });
            }
        }
        Ok(evals)
    }
}
