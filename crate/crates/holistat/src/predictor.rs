//! Sampling-granularity forecasting study: fixed-span input windows over
//! resampled series feed a small from-scratch LSTM with a dense head,
//! trained by gradient descent on Huber loss, and the held-out losses are
//! compared across granularities.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::MetricSeries;

/// Seconds of history fed into the model per window.
pub const INPUT_SPAN_SECONDS: u32 = 7_200;
/// Number of forecast steps, taken on the target series' own grid
/// (80 x 15 s = a 20-minute horizon on the raw grid).
pub const TARGET_STEPS: usize = 80;

/// One training window: a sequence of feature vectors (one per input step,
/// one feature per series) and the forecast target that follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub inputs: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

/// Training hyperparameters. `eval_fraction` of the windows (the most
/// recent ones) are held out for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub huber_delta: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub eval_fraction: f64,
    pub seed: u64,
    pub hidden_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            huber_delta: 1.0,
            max_epochs: 50,
            patience: 5,
            eval_fraction: 0.10,
            seed: 0,
            hidden_size: 32,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(Error::RejectedInput(format!(
                "eval_fraction {} outside (0, 1)",
                self.eval_fraction
            )));
        }
        if self.patience < 1 {
            return Err(Error::RejectedInput("patience must be >= 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::RejectedInput("max_epochs must be >= 1".into()));
        }
        if self.huber_delta <= 0.0 {
            return Err(Error::RejectedInput("huber_delta must be > 0".into()));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::RejectedInput("learning_rate must be finite and >= 0".into()));
        }
        if self.hidden_size < 1 {
            return Err(Error::RejectedInput("hidden_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Single-layer LSTM plus a dense head mapping the final hidden state to
/// the forecast vector. Gate weight matrices are row-major `H x (I+H)`
/// over the concatenated `[x_t, h_{t-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub input_size: usize,
    pub hidden_size: usize,
    pub output_size: usize,
    pub w_input: Vec<f64>,
    pub w_forget: Vec<f64>,
    pub w_output: Vec<f64>,
    pub w_cell: Vec<f64>,
    pub b_input: Vec<f64>,
    pub b_forget: Vec<f64>,
    pub b_output: Vec<f64>,
    pub b_cell: Vec<f64>,
    /// `O x H`, row-major.
    pub w_head: Vec<f64>,
    pub b_head: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = M v` for a row-major `rows x cols` matrix.
fn mat_vec(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        out[r] = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// `dst += dv (outer) v` for a row-major `rows x cols` matrix.
fn outer_acc(dst: &mut [f64], rows: usize, cols: usize, dv: &[f64], v: &[f64]) {
    for r in 0..rows {
        let row = &mut dst[r * cols..(r + 1) * cols];
        for c in 0..cols {
            row[c] += dv[r] * v[c];
        }
    }
}

/// `out += M^T dv` for a row-major `rows x cols` matrix.
fn mat_t_vec_acc(m: &[f64], rows: usize, cols: usize, dv: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out[c] += row[c] * dv[r];
        }
    }
}

struct StepCache {
    z: Vec<f64>,
    gate_i: Vec<f64>,
    gate_f: Vec<f64>,
    gate_o: Vec<f64>,
    gate_g: Vec<f64>,
    cell: Vec<f64>,
    tanh_cell: Vec<f64>,
    hidden: Vec<f64>,
}

impl LstmModel {
    pub fn zeros(input_size: usize, hidden_size: usize, output_size: usize) -> Self {
        let gate = vec![0.0; hidden_size * (input_size + hidden_size)];
        LstmModel {
            input_size,
            hidden_size,
            output_size,
            w_input: gate.clone(),
            w_forget: gate.clone(),
            w_output: gate.clone(),
            w_cell: gate,
            b_input: vec![0.0; hidden_size],
            b_forget: vec![0.0; hidden_size],
            b_output: vec![0.0; hidden_size],
            b_cell: vec![0.0; hidden_size],
            w_head: vec![0.0; output_size * hidden_size],
            b_head: vec![0.0; output_size],
        }
    }

    /// Seeded uniform init scaled by 1/sqrt(hidden); forget-gate biases
    /// start at 1 so early training does not erase the cell state.
    pub fn init(input_size: usize, hidden_size: usize, output_size: usize, seed: u64) -> Self {
        let mut model = Self::zeros(input_size, hidden_size, output_size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1.0 / (hidden_size as f64).sqrt();
        for w in [
            &mut model.w_input,
            &mut model.w_forget,
            &mut model.w_output,
            &mut model.w_cell,
            &mut model.w_head,
        ] {
            for v in w.iter_mut() {
                *v = rng.random_range(-k..k);
            }
        }
        for b in model.b_forget.iter_mut() {
            *b = 1.0;
        }
        model
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn tensors(&self) -> [&Vec<f64>; 10] {
        [
            &self.w_input,
            &self.w_forget,
            &self.w_output,
            &self.w_cell,
            &self.b_input,
            &self.b_forget,
            &self.b_output,
            &self.b_cell,
            &self.w_head,
            &self.b_head,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.w_input,
            &mut self.w_forget,
            &mut self.w_output,
            &mut self.w_cell,
            &mut self.b_input,
            &mut self.b_forget,
            &mut self.b_output,
            &mut self.b_cell,
            &mut self.w_head,
            &mut self.b_head,
        ]
    }

    /// All parameters flattened in a fixed order (gate weights, gate
    /// biases, head weights, head bias).
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn from_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "flat parameter vector of length {}, model has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut model = self.clone();
        let mut offset = 0;
        for t in model.tensors_mut() {
            let len = t.len();
            t.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(model)
    }

    /// One gradient-descent step: `p -= learning_rate * g` for every parameter.
    pub fn apply_gradient(&mut self, grad: &LstmModel, learning_rate: f64) {
        let grads: Vec<f64> = grad.to_flat();
        let mut offset = 0;
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v -= learning_rate * grads[offset];
                offset += 1;
            }
        }
    }

    fn check_inputs(&self, inputs: &[Vec<f64>]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::ShapeMismatch("empty input sequence".into()));
        }
        for (t, x) in inputs.iter().enumerate() {
            if x.len() != self.input_size {
                return Err(Error::ShapeMismatch(format!(
                    "input step {t} has {} features, model expects {}",
                    x.len(),
                    self.input_size
                )));
            }
        }
        Ok(())
    }

    fn forward_cached(&self, inputs: &[Vec<f64>]) -> Result<(Vec<StepCache>, Vec<f64>)> {
        self.check_inputs(inputs)?;
        let h = self.hidden_size;
        let zlen = self.input_size + h;
        let mut hidden = vec![0.0; h];
        let mut cell = vec![0.0; h];
        let mut steps = Vec::with_capacity(inputs.len());
        let mut pre = vec![0.0; h];
        for x in inputs {
            let mut z = Vec::with_capacity(zlen);
            z.extend_from_slice(x);
            z.extend_from_slice(&hidden);

            let mut gate = |w: &[f64], b: &[f64], squash: fn(f64) -> f64| -> Vec<f64> {
                mat_vec(w, h, zlen, &z, &mut pre);
                pre.iter().zip(b).map(|(p, b)| squash(p + b)).collect()
            };
            let gate_i = gate(&self.w_input, &self.b_input, sigmoid);
            let gate_f = gate(&self.w_forget, &self.b_forget, sigmoid);
            let gate_o = gate(&self.w_output, &self.b_output, sigmoid);
            let gate_g = gate(&self.w_cell, &self.b_cell, f64::tanh);

            let new_cell: Vec<f64> = (0..h)
                .map(|j| gate_f[j] * cell[j] + gate_i[j] * gate_g[j])
                .collect();
            let tanh_cell: Vec<f64> = new_cell.iter().map(|c| c.tanh()).collect();
            let new_hidden: Vec<f64> = (0..h).map(|j| gate_o[j] * tanh_cell[j]).collect();

            steps.push(StepCache {
                z,
                gate_i,
                gate_f,
                gate_o,
                gate_g,
                cell: new_cell.clone(),
                tanh_cell,
                hidden: new_hidden.clone(),
            });
            cell = new_cell;
            hidden = new_hidden;
        }
        let mut prediction = vec![0.0; self.output_size];
        mat_vec(&self.w_head, self.output_size, h, &hidden, &mut prediction);
        for (p, b) in prediction.iter_mut().zip(&self.b_head) {
            *p += b;
        }
        Ok((steps, prediction))
    }

    /// Runs the gate recurrence over the sequence and maps the final hidden
    /// state through the dense head.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(inputs)?.1)
    }

    /// Exact reverse-mode gradients of the Huber loss with respect to every
    /// parameter, via backpropagation through time. Returns the gradients
    /// (in a model-shaped container) together with the loss.
    pub fn gradient(&self, window: &WindowSample, delta: f64) -> Result<(LstmModel, f64)> {
        let (steps, prediction) = self.forward_cached(&window.inputs)?;
        let loss = huber(&prediction, &window.target, delta)?;

        let h = self.hidden_size;
        let zlen = self.input_size + h;
        let o = self.output_size;
        let mut grad = LstmModel::zeros(self.input_size, h, o);

        // d loss / d prediction, for the elementwise-mean Huber loss.
        let dpred: Vec<f64> = prediction
            .iter()
            .zip(&window.target)
            .map(|(p, t)| {
                let e = p - t;
                let de = if e.abs() <= delta { e } else { delta * e.signum() };
                de / o as f64
            })
            .collect();

        let last_hidden = &steps.last().expect("non-empty sequence").hidden;
        outer_acc(&mut grad.w_head, o, h, &dpred, last_hidden);
        grad.b_head.copy_from_slice(&dpred);

        let mut dh = vec![0.0; h];
        mat_t_vec_acc(&self.w_head, o, h, &dpred, &mut dh);
        let mut dc = vec![0.0; h];
        let initial_cell = vec![0.0; h];

        for t in (0..steps.len()).rev() {
            let step = &steps[t];
            let prev_cell: &[f64] = if t == 0 { &initial_cell } else { &steps[t - 1].cell };

            let mut di_pre = vec![0.0; h];
            let mut df_pre = vec![0.0; h];
            let mut do_pre = vec![0.0; h];
            let mut dg_pre = vec![0.0; h];
            for j in 0..h {
                let d_out = dh[j] * step.tanh_cell[j];
                do_pre[j] = d_out * step.gate_o[j] * (1.0 - step.gate_o[j]);

                dc[j] += dh[j] * step.gate_o[j] * (1.0 - step.tanh_cell[j] * step.tanh_cell[j]);

                let d_f = dc[j] * prev_cell[j];
                df_pre[j] = d_f * step.gate_f[j] * (1.0 - step.gate_f[j]);

                let d_i = dc[j] * step.gate_g[j];
                di_pre[j] = d_i * step.gate_i[j] * (1.0 - step.gate_i[j]);

                let d_g = dc[j] * step.gate_i[j];
                dg_pre[j] = d_g * (1.0 - step.gate_g[j] * step.gate_g[j]);
            }

            outer_acc(&mut grad.w_input, h, zlen, &di_pre, &step.z);
            outer_acc(&mut grad.w_forget, h, zlen, &df_pre, &step.z);
            outer_acc(&mut grad.w_output, h, zlen, &do_pre, &step.z);
            outer_acc(&mut grad.w_cell, h, zlen, &dg_pre, &step.z);
            for j in 0..h {
                grad.b_input[j] += di_pre[j];
                grad.b_forget[j] += df_pre[j];
                grad.b_output[j] += do_pre[j];
                grad.b_cell[j] += dg_pre[j];
            }

            let mut dz = vec![0.0; zlen];
            mat_t_vec_acc(&self.w_input, h, zlen, &di_pre, &mut dz);
            mat_t_vec_acc(&self.w_forget, h, zlen, &df_pre, &mut dz);
            mat_t_vec_acc(&self.w_output, h, zlen, &do_pre, &mut dz);
            mat_t_vec_acc(&self.w_cell, h, zlen, &dg_pre, &mut dz);

            dh.copy_from_slice(&dz[self.input_size..]);
            for j in 0..h {
                dc[j] *= step.gate_f[j];
            }
        }
        Ok((grad, loss))
    }
}

/// Mean elementwise Huber loss: `e^2/2` inside `delta`, linear outside.
pub fn huber(pred: &[f64], target: &[f64], delta: f64) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "loss over vectors of lengths {} and {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::ShapeMismatch("loss over empty vectors".into()));
    }
    if delta <= 0.0 {
        return Err(Error::RejectedInput(format!("huber delta {delta} must be > 0")));
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = (p - t).abs();
            if e <= delta {
                0.5 * e * e
            } else {
                delta * (e - 0.5 * delta)
            }
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// Cuts aligned, fully-present windows out of a series set: per window,
/// `INPUT_SPAN_SECONDS` of history from every series resampled to
/// `granularity`, then `TARGET_STEPS` samples of the first series on its
/// own (base) grid. Windows are anchored at epoch multiples of the input
/// span, so every granularity sees identical wall-clock windows. Returns
/// the windows plus the count dropped for missing data.
pub fn make_windows(
    series: &[MetricSeries],
    granularity: u32,
) -> Result<(Vec<WindowSample>, usize)> {
    let Some(target_series) = series.first() else {
        return Err(Error::RejectedInput("window construction over zero series".into()));
    };
    let span = INPUT_SPAN_SECONDS;
    if granularity == 0 || span % granularity != 0 {
        return Err(Error::RejectedInput(format!(
            "granularity {granularity} must divide the {span} s input span"
        )));
    }
    let input_steps = (span / granularity) as usize;
    let base = i64::from(target_series.base_interval);
    let horizon = base * TARGET_STEPS as i64;

    let resampled: Vec<MetricSeries> =
        series.iter().map(|s| crate::trace::resample(s, granularity)).collect::<Result<_>>()?;
    for s in &resampled {
        if s.is_empty() {
            return Err(Error::RejectedInput(format!("{}: empty series", s.key())));
        }
    }

    // Usable wall-clock range where every input series exists.
    let inputs_start =
        resampled.iter().map(|s| s.samples[0].timestamp).max().expect("non-empty set");
    let inputs_end = resampled
        .iter()
        .map(|s| s.samples.last().expect("non-empty").timestamp + i64::from(granularity))
        .min()
        .expect("non-empty set");
    let target_end = match target_series.samples.last() {
        Some(s) => s.timestamp + base,
        None => return Err(Error::RejectedInput("empty target series".into())),
    };

    let span = i64::from(span);
    let first_anchor = inputs_start.div_euclid(span) * span
        + if inputs_start.rem_euclid(span) == 0 { 0 } else { span };

    let g = i64::from(granularity);
    let mut windows = Vec::new();
    let mut dropped = 0;
    let mut anchor = first_anchor;
    while anchor + span <= inputs_end && anchor + span + horizon <= target_end {
        let mut inputs: Vec<Vec<f64>> = vec![Vec::with_capacity(series.len()); input_steps];
        let mut complete = true;
        'outer: for s in &resampled {
            let t0 = s.samples[0].timestamp;
            for (step, row) in inputs.iter_mut().enumerate() {
                let t = anchor + step as i64 * g;
                let idx = (t - t0) / g;
                match usize::try_from(idx).ok().and_then(|i| s.samples.get(i)) {
                    Some(sample) if sample.value.is_some() => {
                        row.push(sample.value.expect("present"));
                    }
                    _ => {
                        complete = false;
                        break 'outer;
                    }
                }
            }
        }
        let mut target = Vec::with_capacity(TARGET_STEPS);
        if complete {
            for k in 0..TARGET_STEPS as i64 {
                let t = anchor + span + k * base;
                let found = target_series
                    .samples
                    .binary_search_by(|s| s.timestamp.cmp(&t))
                    .ok()
                    .and_then(|i| target_series.samples[i].value);
                match found {
                    Some(v) => target.push(v),
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
        }
        if complete {
            windows.push(WindowSample { inputs, target });
        } else {
            dropped += 1;
        }
        anchor += span;
    }

    if windows.is_empty() {
        return Err(Error::RejectedInput(format!(
            "no complete window fits: {} candidate(s) dropped for missing data",
            dropped
        )));
    }
    Ok((windows, dropped))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub model: LstmModel,
    pub loss_history: Vec<EpochLoss>,
    pub best_eval_loss: f64,
    pub windows_used: usize,
    pub windows_dropped: usize,
}

fn mean_loss(model: &LstmModel, windows: &[WindowSample], delta: f64) -> Result<f64> {
    let mut total = 0.0;
    for w in windows {
        total += huber(&model.forward(&w.inputs)?, &w.target, delta)?;
    }
    Ok(total / windows.len() as f64)
}

/// Trains on the chronologically earliest windows and holds out the most
/// recent `eval_fraction` for evaluation. Plain per-window gradient
/// descent; stops early once the best evaluation loss has not improved by
/// more than 1e-5 for `patience` consecutive epochs. Returns the model
/// snapshot with the best evaluation loss.
pub fn train(
    series: &[MetricSeries],
    granularity: u32,
    config: &TrainConfig,
) -> Result<TrainResult> {
    const MIN_IMPROVEMENT: f64 = 1e-5;
    config.validate()?;
    let (windows, dropped) = make_windows(series, granularity)?;
    if windows.len() < 2 {
        return Err(Error::RejectedInput(format!(
            "{} window(s) cannot support a train/eval split",
            windows.len()
        )));
    }
    let n_eval = ((windows.len() as f64 * config.eval_fraction).round() as usize)
        .clamp(1, windows.len() - 1);
    let (train_windows, eval_windows) = windows.split_at(windows.len() - n_eval);

    let input_size = train_windows[0].inputs[0].len();
    let mut model =
        LstmModel::init(input_size, config.hidden_size, TARGET_STEPS, config.seed);
    let mut best_model = model.clone();
    let mut best_eval = f64::INFINITY;
    let mut stale_epochs = 0;
    let mut loss_history = Vec::new();

    for epoch in 0..config.max_epochs {
        let mut train_total = 0.0;
        for w in train_windows {
            let (grad, loss) = model.gradient(w, config.huber_delta)?;
            model.apply_gradient(&grad, config.learning_rate);
            train_total += loss;
        }
        let train_loss = train_total / train_windows.len() as f64;
        let eval_loss = mean_loss(&model, eval_windows, config.huber_delta)?;
        loss_history.push(EpochLoss { epoch, train_loss, eval_loss });

        if eval_loss < best_eval - MIN_IMPROVEMENT {
            best_eval = eval_loss;
            best_model = model.clone();
            stale_epochs = 0;
        } else {
            if eval_loss < best_eval {
                // Keep the strictly better snapshot even when the step is
                // too small to reset the plateau counter.
                best_eval = eval_loss;
                best_model = model.clone();
            }
            stale_epochs += 1;
            if stale_epochs >= config.patience {
                break;
            }
        }
    }

    Ok(TrainResult {
        model: best_model,
        loss_history,
        best_eval_loss: best_eval,
        windows_used: windows.len(),
        windows_dropped: dropped,
    })
}

/// Held-out loss for one granularity; `best` marks the row minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub granularity: u32,
    pub eval_loss: f64,
    pub best: bool,
}

/// Trains one model per granularity on the same raw series (targets always
/// come from the base grid, so losses are directly comparable) and marks
/// the best cell. Ties go to the first granularity listed.
pub fn granularity_study(
    series: &[MetricSeries],
    granularities: &[u32],
    config: &TrainConfig,
) -> Result<Vec<StudyCell>> {
    if granularities.is_empty() {
        return Err(Error::RejectedInput("granularity study over zero granularities".into()));
    }
    let mut cells: Vec<StudyCell> = Vec::with_capacity(granularities.len());
    for &g in granularities {
        let outcome = train(series, g, config)?;
        cells.push(StudyCell { granularity: g, eval_loss: outcome.best_eval_loss, best: false });
    }
    let best_idx = cells
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.eval_loss.partial_cmp(&b.1.eval_loss).expect("finite losses"))
        .map(|(i, _)| i)
        .expect("non-empty");
    cells[best_idx].best = true;
    Ok(cells)
}
