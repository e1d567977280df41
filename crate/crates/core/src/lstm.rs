//! Model parameters, the LSTM cell recurrence, and the full-sequence forward
//! pass with a cached trace for backpropagation through time.
//!
//! The architecture is a single forget-gate LSTM layer (no peepholes, zero
//! initial states) feeding a linear dense head from the final hidden state:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)   o = σ(W_o x + U_o h + b_o)
//! c_t = f ⊙ c_{t−1} + i ⊙ g       h_t = o ⊙ tanh(c_t)
//! y = w_d · h_T + b_d
//! ```
//!
//! Everything is `f64`; attribution integrals and finite-difference gradient
//! checks need the headroom.

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite state at timestep {timestep}; parameters have blown up")]
    NonFiniteState { timestep: usize },
    #[error("input has {got} columns, model expects {expected}")]
    InputDimMismatch { expected: usize, got: usize },
    #[error("empty input sequence")]
    EmptySequence,
}

/// Weights of one gate: input projection `w` (hidden × input_dim), recurrent
/// projection `u` (hidden × hidden), and bias `b` (hidden).
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

impl GateParams {
    fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w: Array2::zeros((hidden, input_dim)),
            u: Array2::zeros((hidden, hidden)),
            b: Array1::zeros(hidden),
        }
    }
}

/// All learnable parameters: the four gates plus the dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub cell_gate: GateParams,
    pub output_gate: GateParams,
    pub dense_w: Array1<f64>,
    pub dense_b: f64,
}

/// Gradients with respect to every parameter share the parameter layout.
pub type ParamGradient = ModelParams;

impl ModelParams {
    /// All-zero parameters for the given dimensions.
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_gate: GateParams::zeros(input_dim, hidden),
            forget_gate: GateParams::zeros(input_dim, hidden),
            cell_gate: GateParams::zeros(input_dim, hidden),
            output_gate: GateParams::zeros(input_dim, hidden),
            dense_w: Array1::zeros(hidden),
            dense_b: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_gate.w.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.input_gate.w.nrows()
    }

    /// Total number of scalar parameters:
    /// 4·(hidden·input_dim + hidden² + hidden) + hidden + 1.
    pub fn param_count(&self) -> usize {
        let (d, h) = (self.input_dim(), self.hidden());
        4 * (h * d + h * h + h) + h + 1
    }

    fn gates(&self) -> [&GateParams; 4] {
        [
            &self.input_gate,
            &self.forget_gate,
            &self.cell_gate,
            &self.output_gate,
        ]
    }

    /// Flattens all parameters into one vector. Order: per gate (input,
    /// forget, cell, output) the blocks w (row-major), u (row-major), b;
    /// then dense_w and dense_b. This is also the checkpoint layout.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for gate in self.gates() {
            out.extend(gate.w.iter());
            out.extend(gate.u.iter());
            out.extend(gate.b.iter());
        }
        out.extend(self.dense_w.iter());
        out.push(self.dense_b);
        out
    }

    /// Inverse of [`ModelParams::flatten`] for the given dimensions.
    pub fn from_flat(input_dim: usize, hidden: usize, flat: &[f64]) -> Self {
        let mut params = Self::zeros(input_dim, hidden);
        let expected = params.param_count();
        assert_eq!(
            flat.len(),
            expected,
            "flat parameter vector has {} entries, expected {expected}",
            flat.len()
        );
        let mut it = flat.iter();
        {
            let mut gates = [
                &mut params.input_gate,
                &mut params.forget_gate,
                &mut params.cell_gate,
                &mut params.output_gate,
            ];
            for gate in gates.iter_mut() {
                for v in gate.w.iter_mut() {
                    *v = *it.next().unwrap();
                }
                for v in gate.u.iter_mut() {
                    *v = *it.next().unwrap();
                }
                for v in gate.b.iter_mut() {
                    *v = *it.next().unwrap();
                }
            }
        }
        for v in params.dense_w.iter_mut() {
            *v = *it.next().unwrap();
        }
        params.dense_b = *it.next().unwrap();
        params
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// Iterates all scalar parameters in [`ModelParams::flatten`] order.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.gates()
            .into_iter()
            .flat_map(|g| g.w.iter().chain(g.u.iter()).chain(g.b.iter()))
            .chain(self.dense_w.iter())
            .chain(std::iter::once(&self.dense_b))
    }

    /// `self += scale · other`, field by field. Shapes must match.
    pub fn scaled_add_assign(&mut self, scale: f64, other: &Self) {
        let pairs = [
            (&mut self.input_gate, &other.input_gate),
            (&mut self.forget_gate, &other.forget_gate),
            (&mut self.cell_gate, &other.cell_gate),
            (&mut self.output_gate, &other.output_gate),
        ];
        for (dst, src) in pairs {
            dst.w.scaled_add(scale, &src.w);
            dst.u.scaled_add(scale, &src.u);
            dst.b.scaled_add(scale, &src.b);
        }
        self.dense_w.scaled_add(scale, &other.dense_w);
        self.dense_b += scale * other.dense_b;
    }
}

/// Seeded parameter initialization: weights uniform in ±1/√fan_in (fan_in is
/// the input dimension for `w`, the hidden dimension for `u` and the dense
/// head), biases zero except the forget-gate bias at 1 so early training does
/// not forget across long sequences.
pub fn init_params(seed: u64, input_dim: usize, hidden: usize) -> ModelParams {
    assert!(input_dim >= 1 && hidden >= 1, "dimensions must be positive");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let w_dist = Uniform::new_inclusive(-1.0 / (input_dim as f64).sqrt(), 1.0 / (input_dim as f64).sqrt())
        .expect("valid uniform bounds");
    let u_dist = Uniform::new_inclusive(-1.0 / (hidden as f64).sqrt(), 1.0 / (hidden as f64).sqrt())
        .expect("valid uniform bounds");

    let mut params = ModelParams::zeros(input_dim, hidden);
    {
        let mut gates = [
            &mut params.input_gate,
            &mut params.forget_gate,
            &mut params.cell_gate,
            &mut params.output_gate,
        ];
        for gate in gates.iter_mut() {
            for v in gate.w.iter_mut() {
                *v = w_dist.sample(&mut rng);
            }
            for v in gate.u.iter_mut() {
                *v = u_dist.sample(&mut rng);
            }
        }
    }
    params.forget_gate.b.fill(1.0);
    for v in params.dense_w.iter_mut() {
        *v = u_dist.sample(&mut rng);
    }
    params
}

/// Memory cell and hidden state after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub c: Array1<f64>,
    pub h: Array1<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            c: Array1::zeros(hidden),
            h: Array1::zeros(hidden),
        }
    }
}

/// Activations of the four gates at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GateActivations {
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub o: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Writes `σ/tanh(gate.w x + gate.u h_prev + gate.b)` into `out` without
/// allocating.
fn gate_preactivation_into(
    gate: &GateParams,
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    out: &mut ArrayViewMut1<f64>,
) {
    out.assign(&gate.b);
    general_mat_vec_mul(1.0, &gate.w, &x, 1.0, out);
    general_mat_vec_mul(1.0, &gate.u, &h_prev, 1.0, out);
}

/// One recurrence step written into caller-provided views; the shared core of
/// [`lstm_step`] and [`forward`].
#[allow(clippy::too_many_arguments)]
fn step_into(
    params: &ModelParams,
    x: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    mut i: ArrayViewMut1<f64>,
    mut f: ArrayViewMut1<f64>,
    mut g: ArrayViewMut1<f64>,
    mut o: ArrayViewMut1<f64>,
    mut c: ArrayViewMut1<f64>,
    mut h: ArrayViewMut1<f64>,
) {
    gate_preactivation_into(&params.input_gate, x, h_prev, &mut i);
    i.mapv_inplace(sigmoid);
    gate_preactivation_into(&params.forget_gate, x, h_prev, &mut f);
    f.mapv_inplace(sigmoid);
    gate_preactivation_into(&params.cell_gate, x, h_prev, &mut g);
    g.mapv_inplace(f64::tanh);
    gate_preactivation_into(&params.output_gate, x, h_prev, &mut o);
    o.mapv_inplace(sigmoid);

    for k in 0..c.len() {
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        h[k] = o[k] * c[k].tanh();
    }
}

/// One LSTM step: gates, new cell state, and new hidden state from the input
/// vector and the previous state.
pub fn lstm_step(
    x: ArrayView1<f64>,
    prev: &CellState,
    params: &ModelParams,
) -> Result<(CellState, GateActivations), ModelError> {
    if x.len() != params.input_dim() {
        return Err(ModelError::InputDimMismatch {
            expected: params.input_dim(),
            got: x.len(),
        });
    }
    let hidden = params.hidden();
    let mut state = CellState::zeros(hidden);
    let mut gates = GateActivations {
        i: Array1::zeros(hidden),
        f: Array1::zeros(hidden),
        g: Array1::zeros(hidden),
        o: Array1::zeros(hidden),
    };
    step_into(
        params,
        x,
        prev.c.view(),
        prev.h.view(),
        gates.i.view_mut(),
        gates.f.view_mut(),
        gates.g.view_mut(),
        gates.o.view_mut(),
        state.c.view_mut(),
        state.h.view_mut(),
    );
    if state.c.iter().chain(state.h.iter()).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteState { timestep: 0 });
    }
    Ok((state, gates))
}

/// All intermediate activations of one sequence, row t holding step t
/// (0-based), plus the dense-head prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// seq_len × input_dim copy of the inputs.
    pub inputs: Array2<f64>,
    pub gate_i: Array2<f64>,
    pub gate_f: Array2<f64>,
    pub gate_g: Array2<f64>,
    pub gate_o: Array2<f64>,
    /// Memory cell values c_t, seq_len × hidden.
    pub cell: Array2<f64>,
    /// Hidden states h_t, seq_len × hidden.
    pub hidden: Array2<f64>,
    /// Dense-head output from the final hidden state.
    pub prediction: f64,
}

impl ForwardTrace {
    pub fn seq_len(&self) -> usize {
        self.inputs.nrows()
    }

    /// Trajectory of memory cell `j` over the sequence.
    pub fn cell_trajectory(&self, j: usize) -> Array1<f64> {
        self.cell.column(j).to_owned()
    }
}

/// Runs the full sequence from zero initial states and caches every
/// intermediate value. Fails with the first timestep whose state goes
/// non-finite.
pub fn forward(inputs: &Array2<f64>, params: &ModelParams) -> Result<ForwardTrace, ModelError> {
    let seq_len = inputs.nrows();
    if seq_len == 0 {
        return Err(ModelError::EmptySequence);
    }
    if inputs.ncols() != params.input_dim() {
        return Err(ModelError::InputDimMismatch {
            expected: params.input_dim(),
            got: inputs.ncols(),
        });
    }
    let hidden = params.hidden();

    let mut trace = ForwardTrace {
        inputs: inputs.clone(),
        gate_i: Array2::zeros((seq_len, hidden)),
        gate_f: Array2::zeros((seq_len, hidden)),
        gate_g: Array2::zeros((seq_len, hidden)),
        gate_o: Array2::zeros((seq_len, hidden)),
        cell: Array2::zeros((seq_len, hidden)),
        hidden: Array2::zeros((seq_len, hidden)),
        prediction: 0.0,
    };

    let mut c_prev = Array1::zeros(hidden);
    let mut h_prev = Array1::zeros(hidden);
    for t in 0..seq_len {
        step_into(
            params,
            inputs.row(t),
            c_prev.view(),
            h_prev.view(),
            trace.gate_i.row_mut(t),
            trace.gate_f.row_mut(t),
            trace.gate_g.row_mut(t),
            trace.gate_o.row_mut(t),
            trace.cell.row_mut(t),
            trace.hidden.row_mut(t),
        );
        let row_c = trace.cell.row(t);
        let row_h = trace.hidden.row(t);
        if row_c.iter().chain(row_h.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteState { timestep: t });
        }
        c_prev.assign(&row_c);
        h_prev.assign(&row_h);
    }

    trace.prediction = params.dense_w.dot(&h_prev) + params.dense_b;
    if !trace.prediction.is_finite() {
        return Err(ModelError::NonFiniteState { timestep: seq_len - 1 });
    }
    Ok(trace)
}

/// Convenience wrapper returning only the prediction.
pub fn predict(inputs: &Array2<f64>, params: &ModelParams) -> Result<f64, ModelError> {
    forward(inputs, params).map(|t| t.prediction)
}
